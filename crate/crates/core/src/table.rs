//! Candidate tables: evidence, deployment labels, responses and losses.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EvidenceKind {
    /// Exact-comparable tokens.
    Discrete,
    /// Real numbers.
    Continuous,
}

/// One evidence coordinate across all candidates.
#[derive(Debug, Clone, PartialEq)]
pub enum EvidenceColumn {
    Discrete { name: String, values: Vec<String> },
    Continuous { name: String, values: Vec<f64> },
}

impl EvidenceColumn {
    pub fn name(&self) -> &str {
        match self {
            EvidenceColumn::Discrete { name, .. } | EvidenceColumn::Continuous { name, .. } => name,
        }
    }

    pub fn kind(&self) -> EvidenceKind {
        match self {
            EvidenceColumn::Discrete { .. } => EvidenceKind::Discrete,
            EvidenceColumn::Continuous { .. } => EvidenceKind::Continuous,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            EvidenceColumn::Discrete { values, .. } => values.len(),
            EvidenceColumn::Continuous { values, .. } => values.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Token used for exact-pattern grouping. Continuous values compare by
    /// their shortest round-trip decimal form.
    pub fn token(&self, row: usize) -> String {
        match self {
            EvidenceColumn::Discrete { values, .. } => values[row].clone(),
            EvidenceColumn::Continuous { values, .. } => format!("{}", values[row]),
        }
    }

    fn select(&self, rows: &[usize]) -> Self {
        match self {
            EvidenceColumn::Discrete { name, values } => EvidenceColumn::Discrete {
                name: name.clone(),
                values: rows.iter().map(|&i| values[i].clone()).collect(),
            },
            EvidenceColumn::Continuous { name, values } => EvidenceColumn::Continuous {
                name: name.clone(),
                values: rows.iter().map(|&i| values[i]).collect(),
            },
        }
    }
}

/// Finite, ordered set of deployment actions. Labels are stored as indices
/// into this list; for binary claims index 1 is the positive action.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionAlphabet {
    tokens: Vec<String>,
}

impl ActionAlphabet {
    pub fn new(tokens: Vec<String>) -> Result<Self> {
        if tokens.is_empty() {
            return Err(CoreError::validation("action alphabet is empty"));
        }
        let unique: BTreeSet<&String> = tokens.iter().collect();
        if unique.len() != tokens.len() {
            return Err(CoreError::validation("action alphabet has duplicate tokens"));
        }
        Ok(Self { tokens })
    }

    /// `{"0","1"}` when every observed token is `0` or `1`, otherwise the
    /// sorted distinct tokens.
    pub fn infer<'a>(observed: impl IntoIterator<Item = &'a str>) -> Result<Self> {
        let distinct: BTreeSet<&str> = observed.into_iter().collect();
        if !distinct.is_empty() && distinct.iter().all(|t| *t == "0" || *t == "1") {
            return Self::new(vec!["0".into(), "1".into()]);
        }
        Self::new(distinct.into_iter().map(str::to_owned).collect())
    }

    pub fn binary() -> Self {
        Self {
            tokens: vec!["0".into(), "1".into()],
        }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn is_binary(&self) -> bool {
        self.tokens.len() == 2
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }
}

/// Rows of candidates with their evidence and optional deployment quantities.
///
/// Optional per-row fields are stored as `Option` so that an operation which
/// needs a field can reject rows where it is missing instead of dropping them.
#[derive(Debug, Clone, PartialEq)]
pub struct CandidateTable {
    ids: Vec<String>,
    evidence: Vec<EvidenceColumn>,
    alphabet: Option<ActionAlphabet>,
    labels: Option<Vec<Option<usize>>>,
    responses: Option<Vec<Option<f64>>>,
    losses: Option<Vec<Vec<f64>>>,
}

impl CandidateTable {
    pub fn new(ids: Vec<String>, evidence: Vec<EvidenceColumn>) -> Result<Self> {
        let unique: BTreeSet<&String> = ids.iter().collect();
        if unique.len() != ids.len() {
            let mut seen = BTreeSet::new();
            let dup = ids.iter().find(|id| !seen.insert(*id)).cloned();
            return Err(CoreError::validation(format!(
                "duplicate candidate id {:?}",
                dup.unwrap_or_default()
            )));
        }
        for col in &evidence {
            if col.len() != ids.len() {
                return Err(CoreError::validation(format!(
                    "evidence column {:?} has {} values for {} candidates",
                    col.name(),
                    col.len(),
                    ids.len()
                )));
            }
            if let EvidenceColumn::Continuous { name, values } = col {
                if let Some(i) = values.iter().position(|v| !v.is_finite()) {
                    return Err(CoreError::validation(format!(
                        "evidence column {name:?} row {i} is not finite"
                    )));
                }
            }
        }
        Ok(Self {
            ids,
            evidence,
            alphabet: None,
            labels: None,
            responses: None,
            losses: None,
        })
    }

    /// Attaches deployment labels given as tokens from `alphabet`.
    pub fn with_labels(
        mut self,
        alphabet: ActionAlphabet,
        labels: Vec<Option<String>>,
    ) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(CoreError::validation(format!(
                "{} labels for {} candidates",
                labels.len(),
                self.len()
            )));
        }
        let mut idx = Vec::with_capacity(labels.len());
        for (row, l) in labels.iter().enumerate() {
            idx.push(match l {
                None => None,
                Some(tok) => Some(alphabet.index_of(tok).ok_or_else(|| {
                    CoreError::validation(format!(
                        "row {row} (id {:?}): label {tok:?} is not in the declared alphabet {:?}",
                        self.ids[row],
                        alphabet.tokens()
                    ))
                })?),
            });
        }
        if let Some(prev) = &self.alphabet {
            if prev != &alphabet {
                return Err(CoreError::validation(
                    "label alphabet differs from the alphabet declared for losses",
                ));
            }
        }
        self.alphabet = Some(alphabet);
        self.labels = Some(idx);
        Ok(self)
    }

    /// Attaches label indices directly.
    pub fn with_label_indices(mut self, alphabet: ActionAlphabet, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.len() {
            return Err(CoreError::validation("label count does not match candidates"));
        }
        if let Some(bad) = labels.iter().find(|&&l| l >= alphabet.len()) {
            return Err(CoreError::validation(format!("label index {bad} outside alphabet")));
        }
        self.alphabet = Some(alphabet);
        self.labels = Some(labels.into_iter().map(Some).collect());
        Ok(self)
    }

    pub fn with_responses(mut self, responses: Vec<Option<f64>>) -> Result<Self> {
        if responses.len() != self.len() {
            return Err(CoreError::validation("response count does not match candidates"));
        }
        if let Some(i) = responses.iter().position(|r| matches!(r, Some(v) if !v.is_finite())) {
            return Err(CoreError::validation(format!("response at row {i} is not finite")));
        }
        self.responses = Some(responses);
        Ok(self)
    }

    /// Attaches per-row losses `L(a, s)`, one value per action of `alphabet`.
    pub fn with_losses(mut self, alphabet: ActionAlphabet, losses: Vec<Vec<f64>>) -> Result<Self> {
        if losses.len() != self.len() {
            return Err(CoreError::validation("loss row count does not match candidates"));
        }
        for (row, l) in losses.iter().enumerate() {
            if l.len() != alphabet.len() {
                return Err(CoreError::validation(format!(
                    "row {row}: losses cover {} actions, alphabet has {}",
                    l.len(),
                    alphabet.len()
                )));
            }
            if l.iter().any(|v| !v.is_finite()) {
                return Err(CoreError::validation(format!("row {row}: non-finite loss")));
            }
        }
        if let Some(prev) = &self.alphabet {
            if prev != &alphabet {
                return Err(CoreError::validation(
                    "loss alphabet differs from the label alphabet",
                ));
            }
        }
        self.alphabet = Some(alphabet);
        self.losses = Some(losses);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    pub fn evidence(&self) -> &[EvidenceColumn] {
        &self.evidence
    }

    pub fn arity(&self) -> usize {
        self.evidence.len()
    }

    pub fn alphabet(&self) -> Option<&ActionAlphabet> {
        self.alphabet.as_ref()
    }

    pub fn has_labels(&self) -> bool {
        self.labels.is_some()
    }

    pub fn has_responses(&self) -> bool {
        self.responses.is_some()
    }

    pub fn has_losses(&self) -> bool {
        self.losses.is_some()
    }

    pub fn losses(&self) -> Option<&[Vec<f64>]> {
        self.losses.as_deref()
    }

    /// Label indices for every row; errors if the column is absent or any row lacks a label.
    pub fn require_labels(&self) -> Result<Vec<usize>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| CoreError::validation("table has no deployment label column (d_label)"))?;
        labels
            .iter()
            .enumerate()
            .map(|(i, l)| {
                l.ok_or_else(|| {
                    CoreError::validation(format!(
                        "row {i} (id {:?}) has no deployment label",
                        self.ids[i]
                    ))
                })
            })
            .collect()
    }

    /// Labels for a binary alphabet, as `0`/`1` indices.
    pub fn require_binary_labels(&self) -> Result<Vec<usize>> {
        let labels = self.require_labels()?;
        let alphabet = self.alphabet.as_ref().expect("labels imply an alphabet");
        if alphabet.len() > 2 {
            return Err(CoreError::validation(format!(
                "binary operation on a {}-action alphabet {:?}",
                alphabet.len(),
                alphabet.tokens()
            )));
        }
        Ok(labels)
    }

    pub fn require_responses(&self) -> Result<Vec<f64>> {
        let responses = self
            .responses
            .as_ref()
            .ok_or_else(|| CoreError::validation("table has no deployment response column (y_star)"))?;
        responses
            .iter()
            .enumerate()
            .map(|(i, r)| {
                r.ok_or_else(|| {
                    CoreError::validation(format!(
                        "row {i} (id {:?}) has no deployment response",
                        self.ids[i]
                    ))
                })
            })
            .collect()
    }

    pub fn require_losses(&self) -> Result<&[Vec<f64>]> {
        self.losses
            .as_deref()
            .ok_or_else(|| CoreError::validation("table has no loss columns (loss_*)"))
    }

    /// Continuous evidence as row vectors; errors if any coordinate is discrete.
    pub fn continuous_rows(&self) -> Result<Vec<Vec<f64>>> {
        let mut cols = Vec::with_capacity(self.evidence.len());
        for c in &self.evidence {
            match c {
                EvidenceColumn::Continuous { values, .. } => cols.push(values),
                EvidenceColumn::Discrete { name, .. } => {
                    return Err(CoreError::validation(format!(
                        "evidence column {name:?} is discrete; this rule needs continuous evidence"
                    )))
                }
            }
        }
        Ok((0..self.len())
            .map(|i| cols.iter().map(|c| c[i]).collect())
            .collect())
    }

    /// Sub-table with the given rows, in the given order.
    pub fn select(&self, rows: &[usize]) -> Self {
        Self {
            ids: rows.iter().map(|&i| self.ids[i].clone()).collect(),
            evidence: self.evidence.iter().map(|c| c.select(rows)).collect(),
            alphabet: self.alphabet.clone(),
            labels: self
                .labels
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i]).collect()),
            responses: self
                .responses
                .as_ref()
                .map(|r| rows.iter().map(|&i| r[i]).collect()),
            losses: self
                .losses
                .as_ref()
                .map(|l| rows.iter().map(|&i| l[i].clone()).collect()),
        }
    }

    /// Histogram of labels over `rows`, keyed by action token.
    pub fn label_histogram(&self, labels: &[usize], rows: &[usize]) -> BTreeMap<String, usize> {
        let mut h = BTreeMap::new();
        for &i in rows {
            let tok = match &self.alphabet {
                Some(a) => a.token(labels[i]).to_owned(),
                None => labels[i].to_string(),
            };
            *h.entry(tok).or_insert(0) += 1;
        }
        h
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn discrete(values: &[&str]) -> EvidenceColumn {
        EvidenceColumn::Discrete {
            name: "e_a".into(),
            values: values.iter().map(|s| s.to_string()).collect(),
        }
    }

    #[test]
    fn duplicate_ids_rejected() {
        let err = CandidateTable::new(vec!["x".into(), "x".into()], vec![discrete(&["a", "b"])]);
        assert!(matches!(err, Err(CoreError::Validation(m)) if m.contains("duplicate")));
    }

    #[test]
    fn ragged_evidence_rejected() {
        let err = CandidateTable::new(vec!["x".into(), "y".into()], vec![discrete(&["a"])]);
        assert!(err.is_err());
    }

    #[test]
    fn labels_outside_alphabet_rejected() {
        let t = CandidateTable::new(vec!["x".into()], vec![discrete(&["a"])]).unwrap();
        let err = t.with_labels(ActionAlphabet::binary(), vec![Some("2".into())]);
        assert!(err.is_err());
    }

    #[test]
    fn missing_label_is_reported_not_dropped() {
        let t = CandidateTable::new(vec!["x".into(), "y".into()], vec![discrete(&["a", "a"])])
            .unwrap()
            .with_labels(ActionAlphabet::binary(), vec![Some("1".into()), None])
            .unwrap();
        let err = t.require_labels().unwrap_err();
        assert!(err.to_string().contains("\"y\""));
    }

    #[test]
    fn alphabet_inference() {
        let a = ActionAlphabet::infer(["1", "1"]).unwrap();
        assert_eq!(a.tokens(), &["0".to_string(), "1".to_string()]);
        let b = ActionAlphabet::infer(["keep", "drop"]).unwrap();
        assert_eq!(b.tokens(), &["drop".to_string(), "keep".to_string()]);
    }

    #[test]
    fn three_action_alphabet_is_not_binary() {
        let t = CandidateTable::new(vec!["x".into()], vec![discrete(&["a"])])
            .unwrap()
            .with_labels(
                ActionAlphabet::new(vec!["a".into(), "b".into(), "c".into()]).unwrap(),
                vec![Some("a".into())],
            )
            .unwrap();
        assert!(t.require_binary_labels().is_err());
    }
}
