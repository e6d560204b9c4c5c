//! Survey data model: study specifications, Likert response matrices, and the
//! prior/target item split that drives prompt construction.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SurveyError {
    #[error("failed to parse study spec: {0}")]
    SpecParse(#[from] serde_json::Error),
    #[error("invalid Likert scale: min={min}, max={max} (need 0 < min < max)")]
    InvalidScale { min: i32, max: i32 },
    #[error("study spec declares no latent variables")]
    NoLatents,
    #[error("latent variable `{0}` has no items")]
    EmptyLatent(String),
    #[error("duplicate latent variable name `{0}`")]
    DuplicateLatent(String),
    #[error("duplicate item id `{0}`")]
    DuplicateItem(String),
    #[error("duplicate demographic field `{0}`")]
    DuplicateDemographic(String),
    #[error("path {from} -> {to} references unknown latent `{unknown}`")]
    PathUnknownLatent {
        from: String,
        to: String,
        unknown: String,
    },
    #[error("path {0} -> {0} is a self-loop")]
    SelfLoop(String),
    #[error("duplicate path {from} -> {to}")]
    DuplicatePath { from: String, to: String },
    #[error("structural paths contain a cycle through `{0}`")]
    CyclicPaths(String),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("response header is missing the `respondent_id` column")]
    MissingIdColumn,
    #[error("response header has unknown column `{0}`")]
    UnknownColumn(String),
    #[error("response header is missing item column `{0}`")]
    MissingItemColumn(String),
    #[error("response header is missing demographic column `{0}`")]
    MissingDemographicColumn(String),
    #[error("row {row}: duplicate respondent id `{id}`")]
    DuplicateRespondentId { row: usize, id: String },
    #[error("row {row}: item `{item}` value `{value}` is not an integer")]
    NonIntegerAnswer {
        row: usize,
        item: String,
        value: String,
    },
    #[error("row {row}: item `{item}` value {value} outside Likert range [{min}, {max}]")]
    AnswerOutOfRange {
        row: usize,
        item: String,
        value: i32,
        min: i32,
        max: i32,
    },
    #[error("row {row}: demographic `{field}` value `{value}` is not numeric")]
    NonNumericDemographic {
        row: usize,
        field: String,
        value: String,
    },
    #[error("response data contains no respondents")]
    EmptyMatrix,
    #[error("unknown latent variable `{0}` in target set")]
    UnknownLatent(String),
    #[error("target latent set is empty")]
    EmptyTargetSet,
    #[error("target set covers every latent; no prior items would remain")]
    NoPriorItems,
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

/// Inclusive integer response bounds shared by every item of a survey.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LikertScale {
    pub min: i32,
    pub max: i32,
}

impl LikertScale {
    pub fn new(min: i32, max: i32) -> Result<Self, SurveyError> {
        if min <= 0 || min >= max {
            return Err(SurveyError::InvalidScale { min, max });
        }
        Ok(Self { min, max })
    }

    pub fn contains(&self, value: i32) -> bool {
        value >= self.min && value <= self.max
    }

    /// All scale levels in ascending order.
    pub fn levels(&self) -> impl Iterator<Item = i32> + '_ {
        self.min..=self.max
    }

    pub fn level_count(&self) -> usize {
        (self.max - self.min + 1) as usize
    }

    pub fn midpoint(&self) -> f64 {
        f64::from(self.min + self.max) / 2.0
    }
}

/// Whether a latent variable acts as an explanatory factor or a modeled outcome.
///
/// Outcome latents are the default target set: their items are the ones a
/// generated respondent answers, while factor items feed the prompt.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LatentRole {
    Factor,
    Outcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Item {
    pub id: String,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatentVariable {
    pub name: String,
    pub role: LatentRole,
    pub items: Vec<Item>,
}

/// Directed structural relation between two latent variables.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuralPath {
    pub from: String,
    pub to: String,
}

impl fmt::Display for StructuralPath {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} -> {}", self.from, self.to)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DemographicKind {
    Categorical,
    Numeric,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemographicField {
    pub name: String,
    pub kind: DemographicKind,
}

/// A validated study specification: measurement blocks, structural paths, and
/// the demographic attributes collected alongside answers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SurveySpec {
    pub name: String,
    pub scale: LikertScale,
    pub latents: Vec<LatentVariable>,
    pub paths: Vec<StructuralPath>,
    pub demographics: Vec<DemographicField>,
}

impl SurveySpec {
    /// Parses and validates a study-spec JSON document.
    pub fn from_json(source: &str) -> Result<Self, SurveyError> {
        let spec: SurveySpec = serde_json::from_str(source)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec serializes")
    }

    fn validate(&self) -> Result<(), SurveyError> {
        LikertScale::new(self.scale.min, self.scale.max)?;
        if self.latents.is_empty() {
            return Err(SurveyError::NoLatents);
        }
        let mut latent_names = HashSet::new();
        let mut item_ids = HashSet::new();
        for latent in &self.latents {
            if !latent_names.insert(latent.name.as_str()) {
                return Err(SurveyError::DuplicateLatent(latent.name.clone()));
            }
            if latent.items.is_empty() {
                return Err(SurveyError::EmptyLatent(latent.name.clone()));
            }
            for item in &latent.items {
                if !item_ids.insert(item.id.as_str()) {
                    return Err(SurveyError::DuplicateItem(item.id.clone()));
                }
            }
        }
        let mut demo_names = HashSet::new();
        for field in &self.demographics {
            if !demo_names.insert(field.name.as_str()) {
                return Err(SurveyError::DuplicateDemographic(field.name.clone()));
            }
        }
        let mut seen_paths = HashSet::new();
        for path in &self.paths {
            if path.from == path.to {
                return Err(SurveyError::SelfLoop(path.from.clone()));
            }
            for end in [&path.from, &path.to] {
                if !latent_names.contains(end.as_str()) {
                    return Err(SurveyError::PathUnknownLatent {
                        from: path.from.clone(),
                        to: path.to.clone(),
                        unknown: end.clone(),
                    });
                }
            }
            if !seen_paths.insert((path.from.as_str(), path.to.as_str())) {
                return Err(SurveyError::DuplicatePath {
                    from: path.from.clone(),
                    to: path.to.clone(),
                });
            }
        }
        self.check_acyclic()?;
        Ok(())
    }

    /// Depth-first cycle check over the structural path graph.
    fn check_acyclic(&self) -> Result<(), SurveyError> {
        let mut succ: HashMap<&str, Vec<&str>> = HashMap::new();
        for path in &self.paths {
            succ.entry(path.from.as_str())
                .or_default()
                .push(path.to.as_str());
        }
        // 0 = unvisited, 1 = on stack, 2 = done
        let mut state: HashMap<&str, u8> = HashMap::new();
        fn visit<'a>(
            node: &'a str,
            succ: &HashMap<&'a str, Vec<&'a str>>,
            state: &mut HashMap<&'a str, u8>,
        ) -> Result<(), SurveyError> {
            match state.get(node) {
                Some(1) => return Err(SurveyError::CyclicPaths(node.to_string())),
                Some(2) => return Ok(()),
                _ => {}
            }
            state.insert(node, 1);
            if let Some(next) = succ.get(node) {
                for n in next {
                    visit(n, succ, state)?;
                }
            }
            state.insert(node, 2);
            Ok(())
        }
        for latent in &self.latents {
            visit(latent.name.as_str(), &succ, &mut state)?;
        }
        Ok(())
    }

    /// Item ids in canonical (declaration) order.
    pub fn item_order(&self) -> Vec<String> {
        self.latents
            .iter()
            .flat_map(|l| l.items.iter().map(|i| i.id.clone()))
            .collect()
    }

    pub fn item_count(&self) -> usize {
        self.latents.iter().map(|l| l.items.len()).sum()
    }

    pub fn latent(&self, name: &str) -> Option<&LatentVariable> {
        self.latents.iter().find(|l| l.name == name)
    }

    pub fn item(&self, id: &str) -> Option<&Item> {
        self.latents
            .iter()
            .flat_map(|l| l.items.iter())
            .find(|i| i.id == id)
    }

    /// Latent a given item belongs to.
    pub fn latent_of_item(&self, item_id: &str) -> Option<&LatentVariable> {
        self.latents
            .iter()
            .find(|l| l.items.iter().any(|i| i.id == item_id))
    }

    /// Names of latents flagged as outcomes, in declaration order.
    pub fn outcome_latents(&self) -> Vec<String> {
        self.latents
            .iter()
            .filter(|l| l.role == LatentRole::Outcome)
            .map(|l| l.name.clone())
            .collect()
    }

    /// Latents that the structural graph points into (one regression each).
    pub fn endogenous_latents(&self) -> Vec<&LatentVariable> {
        self.latents
            .iter()
            .filter(|l| self.paths.iter().any(|p| p.to == l.name))
            .collect()
    }

    pub fn predecessors(&self, latent: &str) -> Vec<&str> {
        self.paths
            .iter()
            .filter(|p| p.to == latent)
            .map(|p| p.from.as_str())
            .collect()
    }
}

/// Loads and validates a study spec from a JSON document.
pub fn load_study_spec(source: &str) -> Result<SurveySpec, SurveyError> {
    SurveySpec::from_json(source)
}

/// Partitions the spec's items into prior items (fed to prompts) and target
/// items (to be answered), keeping canonical order within each list.
pub fn split_items(
    spec: &SurveySpec,
    target_latents: &BTreeSet<String>,
) -> Result<(Vec<String>, Vec<String>), SurveyError> {
    if target_latents.is_empty() {
        return Err(SurveyError::EmptyTargetSet);
    }
    for name in target_latents {
        if spec.latent(name).is_none() {
            return Err(SurveyError::UnknownLatent(name.clone()));
        }
    }
    if target_latents.len() == spec.latents.len() {
        return Err(SurveyError::NoPriorItems);
    }
    let mut prior = Vec::new();
    let mut target = Vec::new();
    for latent in &spec.latents {
        let bucket = if target_latents.contains(&latent.name) {
            &mut target
        } else {
            &mut prior
        };
        bucket.extend(latent.items.iter().map(|i| i.id.clone()));
    }
    Ok((prior, target))
}

/// One demographic cell; missing values are kept explicit so prompts can
/// render them as "not provided" instead of dropping the field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum DemographicValue {
    Numeric(f64),
    Categorical(String),
    Missing,
}

impl DemographicValue {
    pub fn render(&self) -> String {
        match self {
            DemographicValue::Numeric(v) => {
                if v.fract() == 0.0 {
                    format!("{}", *v as i64)
                } else {
                    format!("{v}")
                }
            }
            DemographicValue::Categorical(s) => s.clone(),
            DemographicValue::Missing => "not provided".to_string(),
        }
    }

    /// CSV cell representation; missing values are empty cells.
    pub fn to_csv_cell(&self) -> String {
        match self {
            DemographicValue::Missing => String::new(),
            other => other.render(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Respondent {
    pub id: String,
    pub demographics: BTreeMap<String, DemographicValue>,
    pub answers: BTreeMap<String, i32>,
}

impl Respondent {
    pub fn answer(&self, item: &str) -> Option<i32> {
        self.answers.get(item).copied()
    }

    /// Mean answer over one latent's items; `None` if any answer is absent.
    pub fn latent_mean(&self, latent: &LatentVariable) -> Option<f64> {
        let mut sum = 0.0;
        for item in &latent.items {
            sum += f64::from(self.answer(&item.id)?);
        }
        Some(sum / latent.items.len() as f64)
    }
}

/// Validated respondent-by-item response data bound to one study spec.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    spec: Arc<SurveySpec>,
    item_order: Vec<String>,
    respondents: Vec<Respondent>,
}

impl ResponseMatrix {
    /// Builds a matrix from pre-validated respondents, re-checking scale bounds
    /// and item coverage.
    pub fn new(spec: Arc<SurveySpec>, respondents: Vec<Respondent>) -> Result<Self, SurveyError> {
        if respondents.is_empty() {
            return Err(SurveyError::EmptyMatrix);
        }
        let item_order = spec.item_order();
        let mut seen = HashSet::new();
        for (row, respondent) in respondents.iter().enumerate() {
            let row = row + 1;
            if !seen.insert(respondent.id.clone()) {
                return Err(SurveyError::DuplicateRespondentId {
                    row,
                    id: respondent.id.clone(),
                });
            }
            for item in &item_order {
                match respondent.answer(item) {
                    None => return Err(SurveyError::MissingItemColumn(item.clone())),
                    Some(v) if !spec.scale.contains(v) => {
                        return Err(SurveyError::AnswerOutOfRange {
                            row,
                            item: item.clone(),
                            value: v,
                            min: spec.scale.min,
                            max: spec.scale.max,
                        })
                    }
                    Some(_) => {}
                }
            }
        }
        Ok(Self {
            spec,
            item_order,
            respondents,
        })
    }

    pub fn spec(&self) -> &Arc<SurveySpec> {
        &self.spec
    }

    pub fn item_order(&self) -> &[String] {
        &self.item_order
    }

    pub fn respondents(&self) -> &[Respondent] {
        &self.respondents
    }

    pub fn len(&self) -> usize {
        self.respondents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.respondents.is_empty()
    }

    pub fn respondent(&self, id: &str) -> Option<&Respondent> {
        self.respondents.iter().find(|r| r.id == id)
    }

    pub fn ids(&self) -> Vec<&str> {
        self.respondents.iter().map(|r| r.id.as_str()).collect()
    }

    /// One item's answers in respondent order.
    pub fn item_column(&self, item: &str) -> Vec<i32> {
        self.respondents
            .iter()
            .map(|r| r.answer(item).expect("validated matrix covers all items"))
            .collect()
    }

    /// Rows restricted to the given respondent ids, preserving this matrix's
    /// row order.
    pub fn restrict_to_ids(&self, ids: &BTreeSet<String>) -> Result<Self, SurveyError> {
        let respondents: Vec<Respondent> = self
            .respondents
            .iter()
            .filter(|r| ids.contains(&r.id))
            .cloned()
            .collect();
        Self::new(Arc::clone(&self.spec), respondents)
    }

    /// Writes the matrix in the canonical CSV layout
    /// (`respondent_id, <demographics...>, <items...>`).
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        let mut header = vec!["respondent_id".to_string()];
        header.extend(self.spec.demographics.iter().map(|f| f.name.clone()));
        header.extend(self.item_order.iter().cloned());
        out.push_str(&header.join(","));
        out.push('\n');
        for r in &self.respondents {
            let mut row = vec![r.id.clone()];
            for field in &self.spec.demographics {
                let value = r
                    .demographics
                    .get(&field.name)
                    .unwrap_or(&DemographicValue::Missing);
                row.push(value.to_csv_cell());
            }
            for item in &self.item_order {
                row.push(r.answer(item).expect("validated").to_string());
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }
}

/// Parses CSV response data against a spec, validating every cell.
pub fn load_responses(source: &str, spec: &Arc<SurveySpec>) -> Result<ResponseMatrix, SurveyError> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(source.as_bytes());
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();

    let demo_fields: HashMap<&str, &DemographicField> = spec
        .demographics
        .iter()
        .map(|f| (f.name.as_str(), f))
        .collect();
    let item_ids: HashSet<&str> = spec
        .latents
        .iter()
        .flat_map(|l| l.items.iter().map(|i| i.id.as_str()))
        .collect();

    let mut id_col = None;
    let mut demo_cols: HashMap<String, usize> = HashMap::new();
    let mut item_cols: HashMap<String, usize> = HashMap::new();
    for (idx, name) in headers.iter().enumerate() {
        if name == "respondent_id" {
            id_col = Some(idx);
        } else if demo_fields.contains_key(name.as_str()) {
            demo_cols.insert(name.clone(), idx);
        } else if item_ids.contains(name.as_str()) {
            item_cols.insert(name.clone(), idx);
        } else {
            return Err(SurveyError::UnknownColumn(name.clone()));
        }
    }
    let id_col = id_col.ok_or(SurveyError::MissingIdColumn)?;
    for field in &spec.demographics {
        if !demo_cols.contains_key(&field.name) {
            return Err(SurveyError::MissingDemographicColumn(field.name.clone()));
        }
    }
    for item in spec.item_order() {
        if !item_cols.contains_key(&item) {
            return Err(SurveyError::MissingItemColumn(item));
        }
    }

    let mut respondents = Vec::new();
    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let row = row_idx + 1;
        let id = record.get(id_col).unwrap_or("").to_string();

        let mut demographics = BTreeMap::new();
        for field in &spec.demographics {
            let raw = record.get(demo_cols[&field.name]).unwrap_or("").trim();
            let value = if raw.is_empty() {
                DemographicValue::Missing
            } else {
                match field.kind {
                    DemographicKind::Categorical => {
                        DemographicValue::Categorical(raw.to_string())
                    }
                    DemographicKind::Numeric => DemographicValue::Numeric(
                        raw.parse::<f64>()
                            .map_err(|_| SurveyError::NonNumericDemographic {
                                row,
                                field: field.name.clone(),
                                value: raw.to_string(),
                            })?,
                    ),
                }
            };
            demographics.insert(field.name.clone(), value);
        }

        let mut answers = BTreeMap::new();
        for (item, &col) in &item_cols {
            let raw = record.get(col).unwrap_or("").trim();
            let value = raw
                .parse::<i32>()
                .map_err(|_| SurveyError::NonIntegerAnswer {
                    row,
                    item: item.clone(),
                    value: raw.to_string(),
                })?;
            if !spec.scale.contains(value) {
                return Err(SurveyError::AnswerOutOfRange {
                    row,
                    item: item.clone(),
                    value,
                    min: spec.scale.min,
                    max: spec.scale.max,
                });
            }
            answers.insert(item.clone(), value);
        }

        respondents.push(Respondent {
            id,
            demographics,
            answers,
        });
    }

    ResponseMatrix::new(Arc::clone(spec), respondents)
}
