//! Structural causal models with additive noise over DAGs.
//!
//! An [`Scm`] generates latent samples by ancestral sampling. Hard
//! interventions replace a node's equation with a constant; the node's
//! mechanism and noise are then ignored.

use std::collections::VecDeque;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::design::InterventionRegime;
use crate::seed;
use crate::{Error, Result};

/// Default noise variance for generated SCMs.
pub const NOISE_VARIANCE: f64 = 0.1;
/// Range of linear edge coefficients.
pub const COEFF_RANGE: (f64, f64) = (-0.1, 1.0);

/// Row-major boolean adjacency; `(i, j)` set means `i -> j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DagAdjacency {
    d: usize,
    edges: Vec<bool>,
}

impl DagAdjacency {
    pub fn empty(d: usize) -> Self {
        DagAdjacency {
            d,
            edges: vec![false; d * d],
        }
    }

    /// Builds a DAG from an edge list, rejecting self-loops and cycles.
    pub fn from_edges(d: usize, edges: &[(usize, usize)]) -> Result<Self> {
        if d == 0 {
            return Err(Error::InvalidArgument("DAG needs at least one node".into()));
        }
        let mut dag = DagAdjacency::empty(d);
        for &(i, j) in edges {
            if i >= d || j >= d {
                return Err(Error::InvalidArgument(format!(
                    "edge ({i}, {j}) out of range for {d} nodes"
                )));
            }
            if i == j {
                return Err(Error::Cyclic);
            }
            dag.edges[i * d + j] = true;
        }
        if dag.topological_order().is_none() {
            return Err(Error::Cyclic);
        }
        Ok(dag)
    }

    /// Erdős–Rényi DAG: a uniformly random node order, then every forward
    /// edge with probability `p`.
    pub fn sample_er(d: usize, p: f64, rng_seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
        if d == 0 {
            return Err(Error::InvalidArgument("DAG needs at least one node".into()));
        }
        let mut rng = seed::rng(rng_seed, &[seed::TAG_GRAPH]);
        let mut order: Vec<usize> = (0..d).collect();
        rand::seq::SliceRandom::shuffle(order.as_mut_slice(), &mut rng);
        let mut dag = DagAdjacency::empty(d);
        for a in 0..d {
            for b in a + 1..d {
                // random_bool(1.0) is always true and random_bool(0.0) never is.
                if rng.random_bool(p) {
                    dag.edges[order[a] * d + order[b]] = true;
                }
            }
        }
        Ok(dag)
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn has_edge(&self, from: usize, to: usize) -> bool {
        self.edges[from * self.d + to]
    }

    pub fn edge_count(&self) -> usize {
        self.edges.iter().filter(|&&e| e).count()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        let d = self.d;
        (0..d * d)
            .filter(|&k| self.edges[k])
            .map(|k| (k / d, k % d))
            .collect()
    }

    /// Parents of `node` in increasing index order.
    pub fn parents(&self, node: usize) -> Vec<usize> {
        (0..self.d).filter(|&i| self.has_edge(i, node)).collect()
    }

    /// Kahn's algorithm; `None` if the graph has a cycle.
    pub fn topological_order(&self) -> Option<Vec<usize>> {
        let d = self.d;
        let mut indegree: Vec<usize> = (0..d).map(|j| self.parents(j).len()).collect();
        let mut queue: VecDeque<usize> = (0..d).filter(|&j| indegree[j] == 0).collect();
        let mut order = Vec::with_capacity(d);
        while let Some(i) = queue.pop_front() {
            order.push(i);
            for j in 0..d {
                if self.has_edge(i, j) {
                    indegree[j] -= 1;
                    if indegree[j] == 0 {
                        queue.push_back(j);
                    }
                }
            }
        }
        (order.len() == d).then_some(order)
    }
}

/// Structural equation `f_j(z_Pa_j, η_j)` of one node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Mechanism {
    /// `Σ c_i z_i + η`
    Linear {
        parents: Vec<usize>,
        coefficients: Vec<f64>,
    },
    /// `Σ z_i² + η`
    QuadraticSum { parents: Vec<usize> },
    /// Node `node` (0-based) of the fixed six-node trigonometric SCM.
    Nonlinear2 { node: usize },
}

// Clamp bounds for the second builtin SCM: sqrt/log arguments and the exponent.
const DOMAIN_FLOOR: f64 = 1e-6;
const EXP_CLAMP: f64 = 20.0;

const BUILTIN_EDGES: [(usize, usize); 13] = [
    (0, 1),
    (0, 2),
    (0, 3),
    (0, 4),
    (1, 2),
    (1, 3),
    (1, 5),
    (2, 3),
    (2, 4),
    (2, 5),
    (3, 4),
    (3, 5),
    (4, 5),
];

impl Mechanism {
    pub fn parents(&self) -> Vec<usize> {
        match self {
            Mechanism::Linear { parents, .. } | Mechanism::QuadraticSum { parents } => {
                parents.clone()
            }
            Mechanism::Nonlinear2 { node } => BUILTIN_EDGES
                .iter()
                .filter(|&&(_, to)| to == *node)
                .map(|&(from, _)| from)
                .collect(),
        }
    }

    /// Evaluates the equation; `z` is the full row, only parent entries are read.
    pub fn eval(&self, z: &[f64], noise: f64) -> f64 {
        match self {
            Mechanism::Linear {
                parents,
                coefficients,
            } => {
                parents
                    .iter()
                    .zip(coefficients)
                    .map(|(&p, &c)| c * z[p])
                    .sum::<f64>()
                    + noise
            }
            Mechanism::QuadraticSum { parents } => {
                parents.iter().map(|&p| z[p] * z[p]).sum::<f64>() + noise
            }
            Mechanism::Nonlinear2 { node } => nonlinear2(*node, z) + noise,
        }
    }
}

fn nonlinear2(node: usize, z: &[f64]) -> f64 {
    match node {
        0 => 0.0,
        1 => z[0].sin(),
        2 => (z[0] + z[1]).max(DOMAIN_FLOOR).sqrt(),
        3 => (z[0] * z[0] + z[1]).max(DOMAIN_FLOOR).ln() + z[2] * z[2],
        4 => z[2] * z[0].cos() + z[3].atan(),
        5 => {
            let ratio = z[3] * z[3] / z[4];
            // 0/0 when z4 = z5 = 0
            let ratio = if ratio.is_nan() { 0.0 } else { ratio };
            z[1] * z[2] * ratio.clamp(-EXP_CLAMP, EXP_CLAMP).exp()
        }
        _ => unreachable!("builtin SCM has six nodes"),
    }
}

/// Independent Gaussian noise per node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    means: Vec<f64>,
    variances: Vec<f64>,
}

impl NoiseSpec {
    pub fn gaussian(means: Vec<f64>, variances: Vec<f64>) -> Result<Self> {
        if means.len() != variances.len() {
            return Err(Error::DimensionMismatch {
                what: "noise variances",
                expected: means.len(),
                found: variances.len(),
            });
        }
        if let Some(v) = variances.iter().find(|v| !(**v > 0.0) || !v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "noise variance must be positive, got {v}"
            )));
        }
        Ok(NoiseSpec { means, variances })
    }

    pub fn isotropic(d: usize, variance: f64) -> Result<Self> {
        Self::gaussian(vec![0.0; d], vec![variance; d])
    }

    pub fn len(&self) -> usize {
        self.means.len()
    }

    pub fn is_empty(&self) -> bool {
        self.means.is_empty()
    }

    pub fn mean(&self, j: usize) -> f64 {
        self.means[j]
    }

    pub fn variance(&self, j: usize) -> f64 {
        self.variances[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scm {
    dag: DagAdjacency,
    mechanisms: Vec<Mechanism>,
    noise: NoiseSpec,
    topo_order: Vec<usize>,
}

impl Scm {
    pub fn new(dag: DagAdjacency, mechanisms: Vec<Mechanism>, noise: NoiseSpec) -> Result<Self> {
        let d = dag.d();
        if mechanisms.len() != d {
            return Err(Error::DimensionMismatch {
                what: "mechanisms",
                expected: d,
                found: mechanisms.len(),
            });
        }
        if noise.len() != d {
            return Err(Error::DimensionMismatch {
                what: "noise terms",
                expected: d,
                found: noise.len(),
            });
        }
        for (j, mech) in mechanisms.iter().enumerate() {
            let mut parents = mech.parents();
            parents.sort_unstable();
            if parents != dag.parents(j) {
                return Err(Error::InvalidArgument(format!(
                    "mechanism of node {j} reads {parents:?} but its parents are {:?}",
                    dag.parents(j)
                )));
            }
            if let Mechanism::Linear {
                parents,
                coefficients,
            } = mech
            {
                if parents.len() != coefficients.len() {
                    return Err(Error::DimensionMismatch {
                        what: "linear coefficients",
                        expected: parents.len(),
                        found: coefficients.len(),
                    });
                }
            }
            if let Mechanism::Nonlinear2 { node } = mech {
                if *node != j || d != 6 {
                    return Err(Error::InvalidArgument(
                        "trigonometric mechanisms only exist in the six-node builtin SCM".into(),
                    ));
                }
            }
        }
        let topo_order = dag.topological_order().ok_or(Error::Cyclic)?;
        Ok(Scm {
            dag,
            mechanisms,
            noise,
            topo_order,
        })
    }

    /// Linear SCM over `dag` with explicit per-edge weights, given as a dense
    /// `d × d` matrix read at the DAG's edges.
    pub fn linear_from_weights(
        dag: DagAdjacency,
        weights: &DMatrix<f64>,
        noise: NoiseSpec,
    ) -> Result<Self> {
        let mechanisms = (0..dag.d())
            .map(|j| {
                let parents = dag.parents(j);
                let coefficients = parents.iter().map(|&i| weights[(i, j)]).collect();
                Mechanism::Linear {
                    parents,
                    coefficients,
                }
            })
            .collect();
        Scm::new(dag, mechanisms, noise)
    }

    /// Linear SCM with coefficients i.i.d. uniform on [-0.1, 1.0] and noise N(0, 0.1).
    pub fn sample_linear(dag: DagAdjacency, rng_seed: u64) -> Result<Self> {
        let mut rng = seed::rng(rng_seed, &[seed::TAG_COEFFS]);
        let dist = Uniform::new_inclusive(COEFF_RANGE.0, COEFF_RANGE.1)
            .expect("static coefficient range");
        let d = dag.d();
        let mechanisms = (0..d)
            .map(|j| {
                let parents = dag.parents(j);
                let coefficients = parents.iter().map(|_| dist.sample(&mut rng)).collect();
                Mechanism::Linear {
                    parents,
                    coefficients,
                }
            })
            .collect();
        Scm::new(dag, mechanisms, NoiseSpec::isotropic(d, NOISE_VARIANCE)?)
    }

    /// The fixed six-node nonlinear SCMs: 1 is quadratic sums, 2 the
    /// trigonometric/exponential equations. Both share one graph.
    pub fn builtin_nonlinear(which: u8) -> Result<Self> {
        let dag = DagAdjacency::from_edges(6, &BUILTIN_EDGES)?;
        let mechanisms = match which {
            1 => (0..6)
                .map(|j| Mechanism::QuadraticSum {
                    parents: dag.parents(j),
                })
                .collect(),
            2 => (0..6).map(|node| Mechanism::Nonlinear2 { node }).collect(),
            other => return Err(Error::UnknownBuiltin(other)),
        };
        Scm::new(dag, mechanisms, NoiseSpec::isotropic(6, NOISE_VARIANCE)?)
    }

    /// The three-node chain-with-shortcut `Z1 -> Z2 -> Z3`, `Z1 -> Z3`, all
    /// unit weights and unit-variance noise.
    pub fn three_node_example() -> Self {
        let dag = DagAdjacency::from_edges(3, &[(0, 1), (0, 2), (1, 2)]).expect("acyclic");
        let weights = DMatrix::from_element(3, 3, 1.0);
        Scm::linear_from_weights(dag, &weights, NoiseSpec::isotropic(3, 1.0).expect("positive"))
            .expect("consistent")
    }

    pub fn d(&self) -> usize {
        self.dag.d()
    }

    pub fn dag(&self) -> &DagAdjacency {
        &self.dag
    }

    pub fn mechanisms(&self) -> &[Mechanism] {
        &self.mechanisms
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    pub fn topo_order(&self) -> &[usize] {
        &self.topo_order
    }

    /// Draws `n` rows by ancestral sampling, optionally under a hard
    /// intervention.
    ///
    /// Row `r` uses its own ChaCha stream keyed by `(rng_seed, r)` and draws
    /// one noise value per node in index order, so the output does not
    /// depend on thread scheduling.
    pub fn sample(
        &self,
        n: usize,
        intervention: Option<&InterventionRegime>,
        rng_seed: u64,
    ) -> Result<DMatrix<f64>> {
        let d = self.d();
        if n == 0 {
            return Err(Error::InvalidArgument("sample count must be positive".into()));
        }
        let mut fixed: Vec<Option<f64>> = vec![None; d];
        if let Some(regime) = intervention {
            regime.validate(d)?;
            for (&t, &a) in regime.targets().iter().zip(regime.values()) {
                fixed[t] = Some(a);
            }
        }
        let normals: Vec<Normal<f64>> = (0..d)
            .map(|j| {
                Normal::new(self.noise.mean(j), self.noise.variance(j).sqrt())
                    .expect("validated noise variance")
            })
            .collect();
        let base = seed::derive(rng_seed, &[seed::TAG_SAMPLES]);

        let mut data = vec![0.0; n * d];
        data.par_chunks_mut(d).enumerate().for_each(|(r, row)| {
            let mut rng = ChaCha8Rng::seed_from_u64(base);
            rng.set_stream(r as u64);
            let noise: Vec<f64> = normals.iter().map(|dist| dist.sample(&mut rng)).collect();
            for &j in &self.topo_order {
                row[j] = match fixed[j] {
                    Some(a) => a,
                    None => self.mechanisms[j].eval(row, noise[j]),
                };
            }
        });
        Ok(DMatrix::from_row_slice(n, d, &data))
    }
}
