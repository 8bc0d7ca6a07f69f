//! Hierarchical ICD-10 knowledge base.
//!
//! Entities are loaded from a tab-separated file with one row per code. Every
//! entity has a canonical textual representation,
//! `chapter_title --> subchapter_title --> title`, which is what the decoder is
//! allowed to generate and what [`Ontology::resolve`] maps back to a code.

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Separator between hierarchy levels in a canonical representation.
pub const LEVEL_SEPARATOR: &str = " --> ";

/// Characters with structural meaning in the annotation output grammar.
pub const RESERVED_CHARS: [char; 3] = ['{', '}', '|'];

const COLUMNS: [&str; 7] = [
    "code_id",
    "title",
    "system",
    "chapter_id",
    "chapter_title",
    "subchapter_id",
    "subchapter_title",
];

#[derive(Debug, Error)]
pub enum OntologyError {
    #[error("empty knowledge base")]
    Empty,
    #[error("cannot read knowledge base: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed knowledge base: {0}")]
    Malformed(String),
    #[error("bad header: expected columns {expected:?}, found {found:?}")]
    BadHeader {
        expected: Vec<&'static str>,
        found: Vec<String>,
    },
    #[error("row {row}: missing field `{field}`")]
    MissingField { row: usize, field: &'static str },
    #[error("row {row}: unknown system `{value}` (expected CM or PCS)")]
    UnknownSystem { row: usize, value: String },
    #[error("row {row}: field `{field}` contains reserved character `{ch}`")]
    ReservedCharacter {
        row: usize,
        field: &'static str,
        ch: char,
    },
    #[error("row {row}: {source}")]
    BadCode {
        row: usize,
        #[source]
        source: Box<OntologyError>,
    },
    #[error("duplicate code_id `{0}`")]
    DuplicateCode(String),
    #[error("subchapter `{subchapter}` appears under chapters `{first}` and `{second}`")]
    SubchapterInTwoChapters {
        subchapter: String,
        first: String,
        second: String,
    },
    #[error("partial code `{partial}` appears under subchapters `{first}` and `{second}`")]
    PartialInTwoSubchapters {
        partial: String,
        first: String,
        second: String,
    },
    #[error("unresolvable representation collision between codes {0:?}")]
    RepresentationCollision(Vec<String>),
    #[error("code too short: `{0}`")]
    CodeTooShort(String),
    #[error("unknown code `{0}`")]
    UnknownCode(String),
    #[error("no entity has representation {0:?}")]
    UnresolvedRepresentation(String),
}

/// Which half of ICD-10 a code belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IcdSystem {
    /// ICD-10-CM.
    #[serde(rename = "CM")]
    Diagnosis,
    /// ICD-10-PCS.
    #[serde(rename = "PCS")]
    Procedure,
}

impl IcdSystem {
    pub fn tag(self) -> &'static str {
        match self {
            IcdSystem::Diagnosis => "CM",
            IcdSystem::Procedure => "PCS",
        }
    }
}

impl fmt::Display for IcdSystem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for IcdSystem {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "CM" => Ok(IcdSystem::Diagnosis),
            "PCS" => Ok(IcdSystem::Procedure),
            other => Err(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IcdEntity {
    pub code_id: String,
    pub title: String,
    pub system: IcdSystem,
    pub chapter_id: String,
    pub chapter_title: String,
    pub subchapter_id: String,
    pub subchapter_title: String,
}

impl IcdEntity {
    fn base_representation(&self) -> String {
        [
            self.chapter_title.as_str(),
            self.subchapter_title.as_str(),
            self.title.as_str(),
        ]
        .join(LEVEL_SEPARATOR)
    }
}

/// The three coarser hierarchy levels of a code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ancestors {
    pub chapter_id: String,
    pub subchapter_id: String,
    pub partial: String,
}

/// Granularity at which a prediction can be partially correct.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HierarchyLevel {
    Chapter,
    Subchapter,
    Partial,
}

impl HierarchyLevel {
    pub const ALL: [HierarchyLevel; 3] = [
        HierarchyLevel::Chapter,
        HierarchyLevel::Subchapter,
        HierarchyLevel::Partial,
    ];
}

impl Ancestors {
    pub fn at(&self, level: HierarchyLevel) -> &str {
        match level {
            HierarchyLevel::Chapter => &self.chapter_id,
            HierarchyLevel::Subchapter => &self.subchapter_id,
            HierarchyLevel::Partial => &self.partial,
        }
    }
}

/// The 3-character category of a code: the first three alphanumeric
/// characters once dots are removed.
pub fn partial_code(code_id: &str) -> Result<String, OntologyError> {
    let partial: String = code_id
        .chars()
        .filter(|c| *c != '.')
        .filter(|c| c.is_alphanumeric())
        .take(3)
        .collect();
    if partial.chars().count() < 3 {
        return Err(OntologyError::CodeTooShort(code_id.to_string()));
    }
    Ok(partial)
}

/// Validated, immutable knowledge base.
///
/// Entities are kept sorted by `code_id`, so query results never depend on the
/// row order of the source file.
#[derive(Debug, Clone)]
pub struct Ontology {
    entities: Vec<IcdEntity>,
    partials: Vec<String>,
    representations: Vec<String>,
    by_code: HashMap<String, usize>,
    by_repr: HashMap<String, usize>,
}

impl Ontology {
    /// Reads the KB TSV format (header row plus seven tab-separated columns).
    pub fn load<R: Read>(source: R) -> Result<Self, OntologyError> {
        let mut reader = csv::ReaderBuilder::new()
            .delimiter(b'\t')
            .quoting(false)
            .flexible(true)
            .has_headers(false)
            .from_reader(source);

        let mut records = reader.records();
        let header = match records.next() {
            None => return Err(OntologyError::Empty),
            Some(rec) => rec.map_err(csv_error)?,
        };
        let found: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
        if found != COLUMNS {
            return Err(OntologyError::BadHeader {
                expected: COLUMNS.to_vec(),
                found,
            });
        }

        let mut entities = Vec::new();
        for (idx, rec) in records.enumerate() {
            // header is line 1
            let row = idx + 2;
            let rec = rec.map_err(csv_error)?;
            if rec.iter().all(|f| f.trim().is_empty()) {
                continue;
            }
            entities.push(parse_row(row, &rec)?);
        }
        Self::from_entities(entities)
    }

    /// Builds an ontology from already-parsed entities, applying the same
    /// validation as [`Ontology::load`].
    pub fn from_entities(mut entities: Vec<IcdEntity>) -> Result<Self, OntologyError> {
        if entities.is_empty() {
            return Err(OntologyError::Empty);
        }
        entities.sort_by(|a, b| a.code_id.cmp(&b.code_id));
        for pair in entities.windows(2) {
            if pair[0].code_id == pair[1].code_id {
                return Err(OntologyError::DuplicateCode(pair[0].code_id.clone()));
            }
        }

        let partials = entities
            .iter()
            .map(|e| partial_code(&e.code_id))
            .collect::<Result<Vec<_>, _>>()?;

        let mut chapter_of_sub: HashMap<&str, &str> = HashMap::new();
        let mut sub_of_partial: HashMap<&str, &str> = HashMap::new();
        for (entity, partial) in entities.iter().zip(&partials) {
            let chapter = *chapter_of_sub
                .entry(&entity.subchapter_id)
                .or_insert(&entity.chapter_id);
            if chapter != entity.chapter_id {
                return Err(OntologyError::SubchapterInTwoChapters {
                    subchapter: entity.subchapter_id.clone(),
                    first: chapter.to_string(),
                    second: entity.chapter_id.clone(),
                });
            }
            let sub = *sub_of_partial.entry(partial).or_insert(&entity.subchapter_id);
            if sub != entity.subchapter_id {
                return Err(OntologyError::PartialInTwoSubchapters {
                    partial: partial.clone(),
                    first: sub.to_string(),
                    second: entity.subchapter_id.clone(),
                });
            }
        }

        let representations = disambiguate(&entities)?;
        let by_code = entities
            .iter()
            .enumerate()
            .map(|(i, e)| (e.code_id.clone(), i))
            .collect();
        let by_repr = representations
            .iter()
            .enumerate()
            .map(|(i, r)| (r.clone(), i))
            .collect();

        Ok(Ontology {
            entities,
            partials,
            representations,
            by_code,
            by_repr,
        })
    }

    pub fn len(&self) -> usize {
        self.entities.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entities.is_empty()
    }

    /// Entities in `code_id` order.
    pub fn entities(&self) -> &[IcdEntity] {
        &self.entities
    }

    pub fn get(&self, code_id: &str) -> Option<&IcdEntity> {
        self.by_code.get(code_id).map(|&i| &self.entities[i])
    }

    pub fn contains(&self, code_id: &str) -> bool {
        self.by_code.contains_key(code_id)
    }

    fn index_of(&self, code_id: &str) -> Result<usize, OntologyError> {
        self.by_code
            .get(code_id)
            .copied()
            .ok_or_else(|| OntologyError::UnknownCode(code_id.to_string()))
    }

    pub fn ancestors(&self, code_id: &str) -> Result<Ancestors, OntologyError> {
        let i = self.index_of(code_id)?;
        let e = &self.entities[i];
        Ok(Ancestors {
            chapter_id: e.chapter_id.clone(),
            subchapter_id: e.subchapter_id.clone(),
            partial: self.partials[i].clone(),
        })
    }

    /// Canonical `chapter --> subchapter --> title` string for a code.
    pub fn representation(&self, code_id: &str) -> Result<&str, OntologyError> {
        let i = self.index_of(code_id)?;
        Ok(&self.representations[i])
    }

    /// Exact inverse of [`Ontology::representation`].
    pub fn resolve(&self, repr: &str) -> Result<&str, OntologyError> {
        self.by_repr
            .get(repr)
            .map(|&i| self.entities[i].code_id.as_str())
            .ok_or_else(|| OntologyError::UnresolvedRepresentation(repr.to_string()))
    }

    /// All canonical representations, aligned with [`Ontology::entities`].
    pub fn representations(&self) -> &[String] {
        &self.representations
    }

    pub fn chapter_count(&self) -> usize {
        self.entities
            .iter()
            .map(|e| e.chapter_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }

    pub fn subchapter_count(&self) -> usize {
        self.entities
            .iter()
            .map(|e| e.subchapter_id.as_str())
            .collect::<BTreeSet<_>>()
            .len()
    }
}

fn csv_error(err: csv::Error) -> OntologyError {
    if err.is_io_error() {
        match err.into_kind() {
            csv::ErrorKind::Io(io) => OntologyError::Io(io),
            other => OntologyError::Malformed(format!("{other:?}")),
        }
    } else {
        OntologyError::Malformed(err.to_string())
    }
}

fn parse_row(row: usize, rec: &csv::StringRecord) -> Result<IcdEntity, OntologyError> {
    let field = |i: usize| -> Result<String, OntologyError> {
        match rec.get(i).map(str::trim) {
            Some(v) if !v.is_empty() => Ok(v.to_string()),
            _ => Err(OntologyError::MissingField {
                row,
                field: COLUMNS[i],
            }),
        }
    };
    let code_id = field(0)?;
    let title = field(1)?;
    let system_tag = field(2)?;
    let system = system_tag
        .parse()
        .map_err(|value| OntologyError::UnknownSystem { row, value })?;
    let entity = IcdEntity {
        code_id,
        title,
        system,
        chapter_id: field(3)?,
        chapter_title: field(4)?,
        subchapter_id: field(5)?,
        subchapter_title: field(6)?,
    };
    for (name, value) in [
        ("code_id", &entity.code_id),
        ("title", &entity.title),
        ("chapter_title", &entity.chapter_title),
        ("subchapter_title", &entity.subchapter_title),
    ] {
        if let Some(ch) = value.chars().find(|c| RESERVED_CHARS.contains(c)) {
            return Err(OntologyError::ReservedCharacter {
                row,
                field: name,
                ch,
            });
        }
    }
    partial_code(&entity.code_id).map_err(|e| OntologyError::BadCode {
        row,
        source: Box::new(e),
    })?;
    Ok(entity)
}

/// Base representations, with ` (code_id)` appended to every member of a
/// colliding group.
fn disambiguate(entities: &[IcdEntity]) -> Result<Vec<String>, OntologyError> {
    let base: Vec<String> = entities.iter().map(IcdEntity::base_representation).collect();
    let mut groups: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, r) in base.iter().enumerate() {
        groups.entry(r).or_default().push(i);
    }

    let mut reprs = base.clone();
    for members in groups.values().filter(|m| m.len() > 1) {
        log::debug!("{} entities share representation `{}`", members.len(), base[members[0]]);
        for &i in members {
            reprs[i] = format!("{} ({})", base[i], entities[i].code_id);
        }
    }

    let mut seen: HashMap<&str, usize> = HashMap::new();
    for (i, r) in reprs.iter().enumerate() {
        if let Some(&j) = seen.get(r.as_str()) {
            let mut codes = vec![entities[j].code_id.clone(), entities[i].code_id.clone()];
            codes.sort();
            return Err(OntologyError::RepresentationCollision(codes));
        }
        seen.insert(r, i);
    }
    Ok(reprs)
}
