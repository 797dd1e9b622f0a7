//! Intervention regimes, environment collections and the coverage condition.
//!
//! Indices are 0-based everywhere, including the JSON form.

use std::collections::BTreeSet;
use std::path::Path;

use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::seed;
use crate::{Error, Result};

/// Range of the constants hard interventions set their targets to.
pub const VALUE_RANGE: (f64, f64) = (-2.0, 2.0);

/// One environment: a hard intervention `do(Z_t = a_t)` for each target.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRegime {
    targets: Vec<usize>,
    values: Vec<f64>,
}

impl InterventionRegime {
    pub fn new(targets: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        let regime = InterventionRegime { targets, values };
        regime.check_shape()?;
        Ok(regime)
    }

    /// Skips validation; `validate` or `Scm::sample` will catch problems later.
    pub fn new_unchecked(targets: Vec<usize>, values: Vec<f64>) -> Self {
        InterventionRegime { targets, values }
    }

    pub fn targets(&self) -> &[usize] {
        &self.targets
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn check_shape(&self) -> Result<()> {
        if self.targets.len() != self.values.len() {
            return Err(Error::InterventionMismatch {
                targets: self.targets.len(),
                values: self.values.len(),
            });
        }
        let unique: BTreeSet<_> = self.targets.iter().collect();
        if unique.len() != self.targets.len() {
            return Err(Error::InvalidArgument(format!(
                "duplicate intervention targets in {:?}",
                self.targets
            )));
        }
        Ok(())
    }

    pub fn validate(&self, d: usize) -> Result<()> {
        self.check_shape()?;
        if let Some(t) = self.targets.iter().find(|&&t| t >= d) {
            return Err(Error::InvalidArgument(format!(
                "intervention target {t} out of range for {d} variables"
            )));
        }
        if self.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("intervention values".into()));
        }
        Ok(())
    }

    /// Indices left untouched, i.e. those that keep nonzero variance.
    pub fn support(&self, d: usize) -> BTreeSet<usize> {
        (0..d).filter(|j| !self.targets.contains(j)).collect()
    }
}

/// A finite set of environments, optionally weighted; uniform otherwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSet {
    d: usize,
    regimes: Vec<InterventionRegime>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    weights: Option<Vec<f64>>,
}

impl EnvironmentSet {
    pub fn new(d: usize, regimes: Vec<InterventionRegime>) -> Result<Self> {
        let envs = EnvironmentSet {
            d,
            regimes,
            weights: None,
        };
        envs.validate()?;
        Ok(envs)
    }

    pub fn with_weights(mut self, weights: Vec<f64>) -> Result<Self> {
        self.weights = Some(weights);
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.d == 0 {
            return Err(Error::InvalidArgument(
                "environment set needs at least one variable".into(),
            ));
        }
        for regime in &self.regimes {
            regime.validate(self.d)?;
        }
        if let Some(w) = &self.weights {
            if w.len() != self.regimes.len() {
                return Err(Error::DimensionMismatch {
                    what: "environment weights",
                    expected: self.regimes.len(),
                    found: w.len(),
                });
            }
            let total: f64 = w.iter().sum();
            if w.iter().any(|&x| !(x >= 0.0)) || (total - 1.0).abs() > 1e-12 {
                return Err(Error::InvalidArgument(
                    "environment weights must be nonnegative and sum to 1".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.regimes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regimes.is_empty()
    }

    pub fn regimes(&self) -> &[InterventionRegime] {
        &self.regimes
    }

    pub fn weights(&self) -> Vec<f64> {
        match &self.weights {
            Some(w) => w.clone(),
            None => vec![1.0 / self.regimes.len() as f64; self.regimes.len()],
        }
    }

    /// `S^e = [d] \ T^e` for every regime.
    pub fn support_sets(&self) -> Vec<BTreeSet<usize>> {
        self.regimes.iter().map(|r| r.support(self.d)).collect()
    }

    /// Coverage over the support of the environment measure: zero-weight
    /// regimes do not count.
    pub fn check_sufficient_coverage(&self) -> CoverageReport {
        let weights = self.weights();
        let supports: Vec<_> = self
            .support_sets()
            .into_iter()
            .zip(weights)
            .filter(|(_, w)| *w > 0.0)
            .map(|(s, _)| s)
            .collect();
        check_coverage(self.d, &supports)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let envs: EnvironmentSet = serde_json::from_str(text)?;
        envs.validate()?;
        Ok(envs)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageViolation {
    pub index: usize,
    /// Indices `i != index` never left unintervened while `index` is intervened.
    pub missing: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverageReport {
    pub d: usize,
    pub violations: Vec<CoverageViolation>,
}

impl CoverageReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

impl std::fmt::Display for CoverageReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.passed() {
            return write!(f, "coverage: pass (d = {})", self.d);
        }
        writeln!(f, "coverage: FAIL (d = {})", self.d)?;
        for v in &self.violations {
            writeln!(f, "  index {}: missing {:?}", v.index, v.missing)?;
        }
        Ok(())
    }
}

/// For every `j`, the union of the supports that exclude `j` must equal
/// `[d] \ {j}`.
pub fn check_coverage(d: usize, supports: &[BTreeSet<usize>]) -> CoverageReport {
    let violations = (0..d)
        .filter_map(|j| {
            let mut union = BTreeSet::new();
            for s in supports.iter().filter(|s| !s.contains(&j)) {
                union.extend(s.iter().copied());
            }
            let missing: Vec<usize> = (0..d).filter(|&i| i != j && !union.contains(&i)).collect();
            (!missing.is_empty()).then_some(CoverageViolation { index: j, missing })
        })
        .collect();
    CoverageReport { d, violations }
}

fn draw_values(n: usize, value_seed: u64, regime: usize) -> Vec<f64> {
    let mut rng = seed::rng(value_seed, &[seed::TAG_VALUES, regime as u64]);
    let dist = Uniform::new_inclusive(VALUE_RANGE.0, VALUE_RANGE.1).expect("static range");
    (0..n).map(|_| dist.sample(&mut rng)).collect()
}

fn regimes_from_targets(target_sets: Vec<Vec<usize>>, value_seed: u64) -> Vec<InterventionRegime> {
    target_sets
        .into_iter()
        .enumerate()
        .map(|(e, targets)| {
            let values = draw_values(targets.len(), value_seed, e);
            InterventionRegime { targets, values }
        })
        .collect()
}

/// `d` environments; environment `j` intervenes on everything but `j`.
pub fn leave_one_out_design(d: usize, value_seed: u64) -> Result<EnvironmentSet> {
    if d < 2 {
        return Err(Error::Precondition(format!(
            "leave-one-out design needs d >= 2 (got {d}); with one variable every environment intervenes on it"
        )));
    }
    let targets = (0..d)
        .map(|j| (0..d).filter(|&i| i != j).collect())
        .collect();
    EnvironmentSet::new(d, regimes_from_targets(targets, value_seed))
}

/// Separating-system design from binary labels: for each bit, one regime
/// targeting the indices with that bit set and one targeting the rest.
/// Uses at most `2⌈log₂ d⌉` environments.
pub fn separating_design(d: usize, value_seed: u64) -> Result<EnvironmentSet> {
    if d < 2 {
        return Err(Error::Precondition(format!(
            "separating design needs d >= 2 (got {d})"
        )));
    }
    let bits = ceil_log2(d);
    let mut targets = Vec::with_capacity(2 * bits);
    for b in 0..bits {
        for bit_value in [1, 0] {
            let set: Vec<usize> = (0..d).filter(|&i| (i >> b) & 1 == bit_value).collect();
            if !set.is_empty() && set.len() < d {
                targets.push(set);
            }
        }
    }
    EnvironmentSet::new(d, regimes_from_targets(targets, value_seed))
}

/// The three regimes of the three-node worked example:
/// `do(Z0=1, Z1=1)`, `do(Z0=1, Z2=2)`, `do(Z1=1, Z2=3)`.
pub fn example_design() -> EnvironmentSet {
    let regimes = [(vec![0, 1], vec![1.0, 1.0]), (vec![0, 2], vec![1.0, 2.0]), (vec![1, 2], vec![1.0, 3.0])]
        .into_iter()
        .map(|(t, v)| InterventionRegime { targets: t, values: v })
        .collect();
    EnvironmentSet::new(3, regimes).expect("valid example design")
}

/// `⌈log₂ d⌉` for `d ≥ 1`.
pub fn ceil_log2(d: usize) -> usize {
    assert!(d >= 1);
    (usize::BITS - (d - 1).leading_zeros()) as usize
}
