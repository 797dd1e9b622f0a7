//! Mixed multi-environment datasets.
//!
//! Each environment's latent samples `Z^e` are pushed through one fixed
//! mixing matrix `L` to give the observations `Z̃^e = Z^e L`. The latents are
//! kept alongside for evaluation only.
//!
//! # Container format
//!
//! All integers and floats little-endian:
//!
//! ```text
//! magic        8 bytes   "CRLDSET\0"
//! version      u32
//! header_len   u64
//! header       header_len bytes of JSON (DatasetHeader)
//! mixing       d*m f64, row-major
//! per env e:   observed n*m f64 row-major, then latents n*d f64 row-major
//! checksum     32 bytes  SHA-256 of every preceding byte
//! ```

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DMatrixView};
use rand_distr::{Distribution, Uniform};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::design::EnvironmentSet;
use crate::scm::Scm;
use crate::seed;
use crate::{Error, Result};

const MAGIC: &[u8; 8] = b"CRLDSET\0";
pub const FORMAT_VERSION: u32 = 1;

const MIN_ABS_DET: f64 = 1e-6;
const MAX_CONDITION: f64 = 1e6;
const MIXING_ATTEMPTS: usize = 100;

/// Fraction of each environment used for training; the rest is held out.
pub const TRAIN_FRACTION_NUM: usize = 3;
pub const TRAIN_FRACTION_DEN: usize = 4;

/// An injective linear map `R^d -> R^m`, stored as a `d × m` matrix acting on
/// row vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct MixingMatrix {
    entries: DMatrix<f64>,
    condition: f64,
}

fn condition_number(m: &DMatrix<f64>) -> f64 {
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    if min > 0.0 {
        max / min
    } else {
        f64::INFINITY
    }
}

impl MixingMatrix {
    /// Validates rank and conditioning (and `|det|` when square).
    pub fn from_matrix(entries: DMatrix<f64>) -> Result<Self> {
        let (d, m) = entries.shape();
        if d == 0 || m < d {
            return Err(Error::InvalidArgument(format!(
                "mixing must map d to m >= d dimensions, got {d} x {m}"
            )));
        }
        if entries.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("mixing matrix".into()));
        }
        let condition = condition_number(&entries);
        let det_ok = d != m || entries.determinant().abs() > MIN_ABS_DET;
        if !det_ok || !(condition < MAX_CONDITION) {
            return Err(Error::IllConditioned { condition });
        }
        Ok(MixingMatrix { entries, condition })
    }

    pub fn identity(d: usize) -> Self {
        MixingMatrix {
            entries: DMatrix::identity(d, d),
            condition: 1.0,
        }
    }

    /// Entries i.i.d. uniform on [-1, 1], redrawn until well conditioned.
    pub fn sample(d: usize, m: usize, rng_seed: u64) -> Result<Self> {
        if m < d || d == 0 {
            return Err(Error::InvalidArgument(format!(
                "mixing needs m >= d >= 1, got d = {d}, m = {m}"
            )));
        }
        let dist = Uniform::new_inclusive(-1.0, 1.0).expect("static range");
        for attempt in 0..MIXING_ATTEMPTS {
            let mut rng = seed::rng(rng_seed, &[seed::TAG_MIXING, attempt as u64]);
            let entries = DMatrix::from_fn(d, m, |_, _| dist.sample(&mut rng));
            if let Ok(mixing) = MixingMatrix::from_matrix(entries) {
                return Ok(mixing);
            }
        }
        Err(Error::MixingRetryExhausted {
            seed: rng_seed,
            attempts: MIXING_ATTEMPTS,
        })
    }

    /// The dense 3×3 mixing of the worked example (determinant 4).
    pub fn example() -> Self {
        MixingMatrix::from_matrix(DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0],
        ))
        .expect("invertible example mixing")
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.entries
    }

    pub fn d(&self) -> usize {
        self.entries.nrows()
    }

    pub fn m(&self) -> usize {
        self.entries.ncols()
    }

    pub fn condition_number(&self) -> f64 {
        self.condition
    }

    /// Right inverse `L⁺` (`m × d`) with `L L⁺ = I`.
    pub fn pseudo_inverse(&self) -> DMatrix<f64> {
        self.entries
            .clone()
            .pseudo_inverse(1e-12)
            .expect("non-negative epsilon")
    }

    /// `Z L` for latent rows `Z`.
    pub fn apply(&self, latents: &DMatrix<f64>) -> DMatrix<f64> {
        latents * &self.entries
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetHeader {
    pub format_version: u32,
    pub d: usize,
    pub m: usize,
    pub n_per_env: usize,
    pub n_train: usize,
    pub envs: EnvironmentSet,
    pub seed: u64,
}

/// Observations and latents for every environment, with a row-wise
/// train/test split shared by all environments.
#[derive(Debug, Clone, PartialEq)]
pub struct EnvDataset {
    envs: EnvironmentSet,
    mixing: MixingMatrix,
    observed: Vec<DMatrix<f64>>,
    latents: Vec<DMatrix<f64>>,
    n_train: usize,
    seed: u64,
}

pub fn train_rows(n: usize) -> usize {
    n * TRAIN_FRACTION_NUM / TRAIN_FRACTION_DEN
}

impl EnvDataset {
    /// Samples `n_per_env` latent rows in every environment, mixes them and
    /// splits 75/25. Environments are generated in parallel from
    /// independent seeds.
    pub fn generate(
        scm: &Scm,
        envs: &EnvironmentSet,
        mixing: &MixingMatrix,
        n_per_env: usize,
        rng_seed: u64,
    ) -> Result<Self> {
        if scm.d() != envs.d() {
            return Err(Error::DimensionMismatch {
                what: "environment set dimension",
                expected: scm.d(),
                found: envs.d(),
            });
        }
        if mixing.d() != scm.d() {
            return Err(Error::DimensionMismatch {
                what: "mixing rows",
                expected: scm.d(),
                found: mixing.d(),
            });
        }
        if n_per_env == 0 {
            return Err(Error::InvalidArgument("n_per_env must be positive".into()));
        }
        let latents: Vec<DMatrix<f64>> = envs
            .regimes()
            .par_iter()
            .enumerate()
            .map(|(e, regime)| scm.sample(n_per_env, Some(regime), seed::derive(rng_seed, &[e as u64])))
            .collect::<Result<_>>()?;
        let observed = latents.iter().map(|z| mixing.apply(z)).collect();
        Ok(EnvDataset {
            envs: envs.clone(),
            mixing: mixing.clone(),
            observed,
            latents,
            n_train: train_rows(n_per_env),
            seed: rng_seed,
        })
    }

    pub fn envs(&self) -> &EnvironmentSet {
        &self.envs
    }

    pub fn mixing(&self) -> &MixingMatrix {
        &self.mixing
    }

    pub fn num_envs(&self) -> usize {
        self.observed.len()
    }

    pub fn d(&self) -> usize {
        self.mixing.d()
    }

    pub fn m(&self) -> usize {
        self.mixing.m()
    }

    pub fn n_per_env(&self) -> usize {
        self.observed.first().map_or(0, |o| o.nrows())
    }

    pub fn n_train(&self) -> usize {
        self.n_train
    }

    pub fn n_test(&self) -> usize {
        self.n_per_env() - self.n_train
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn observed(&self, env: usize) -> &DMatrix<f64> {
        &self.observed[env]
    }

    pub fn latents(&self, env: usize) -> &DMatrix<f64> {
        &self.latents[env]
    }

    pub fn train_observed(&self, env: usize) -> DMatrixView<'_, f64> {
        self.observed[env].rows(0, self.n_train)
    }

    pub fn test_observed(&self, env: usize) -> DMatrixView<'_, f64> {
        self.observed[env].rows(self.n_train, self.n_test())
    }

    pub fn train_latents(&self, env: usize) -> DMatrixView<'_, f64> {
        self.latents[env].rows(0, self.n_train)
    }

    pub fn test_latents(&self, env: usize) -> DMatrixView<'_, f64> {
        self.latents[env].rows(self.n_train, self.n_test())
    }

    /// Held-out observations of all environments stacked in environment order.
    pub fn pooled_test(&self) -> (DMatrix<f64>, DMatrix<f64>) {
        let obs = stack_views((0..self.num_envs()).map(|e| self.test_observed(e)), self.m());
        let lat = stack_views((0..self.num_envs()).map(|e| self.test_latents(e)), self.d());
        (obs, lat)
    }

    /// Training observations of all environments stacked in environment order.
    pub fn pooled_train_observed(&self) -> DMatrix<f64> {
        stack_views((0..self.num_envs()).map(|e| self.train_observed(e)), self.m())
    }

    pub fn header(&self) -> DatasetHeader {
        DatasetHeader {
            format_version: FORMAT_VERSION,
            d: self.d(),
            m: self.m(),
            n_per_env: self.n_per_env(),
            n_train: self.n_train,
            envs: self.envs.clone(),
            seed: self.seed,
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = serde_json::to_vec(&self.header())?;
        let n = self.n_per_env();
        let floats = self.d() * self.m() + self.num_envs() * n * (self.m() + self.d());
        let mut buf = Vec::with_capacity(8 + 4 + 8 + header.len() + 8 * floats + 32);
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
        buf.extend_from_slice(&header);
        write_row_major(&mut buf, self.mixing.matrix());
        for (obs, lat) in self.observed.iter().zip(&self.latents) {
            write_row_major(&mut buf, obs);
            write_row_major(&mut buf, lat);
        }
        let digest = Sha256::digest(&buf);
        buf.extend_from_slice(&digest);
        Ok(buf)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 4 + 8 + 32 {
            return Err(Error::Format("file too short".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if &bytes[..MAGIC.len()] != MAGIC {
            return Err(Error::Format("not a dataset container".into()));
        }
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Checksum);
        }
        let mut reader = ByteReader::new(&body[MAGIC.len()..]);
        let version = reader.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let header_len = reader.u64()? as usize;
        let header: DatasetHeader = serde_json::from_slice(reader.take(header_len)?)?;
        header.envs.validate()?;
        let (d, m, n) = (header.d, header.m, header.n_per_env);
        if header.n_train > n || header.envs.d() != d {
            return Err(Error::Format("inconsistent header".into()));
        }
        let mixing = MixingMatrix::from_matrix(reader.matrix(d, m)?)?;
        let mut observed = Vec::with_capacity(header.envs.len());
        let mut latents = Vec::with_capacity(header.envs.len());
        for _ in 0..header.envs.len() {
            observed.push(reader.matrix(n, m)?);
            latents.push(reader.matrix(n, d)?);
        }
        if !reader.is_empty() {
            return Err(Error::Format("trailing bytes after matrices".into()));
        }
        Ok(EnvDataset {
            envs: header.envs,
            mixing,
            observed,
            latents,
            n_train: header.n_train,
            seed: header.seed,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// One CSV per environment (`env_<e>.csv`), header `z~1..z~m`.
    pub fn export_csv(&self, dir: &Path) -> Result<Vec<std::path::PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let header: Vec<String> = (1..=self.m()).map(|j| format!("z~{j}")).collect();
        let mut paths = Vec::new();
        for (e, obs) in self.observed.iter().enumerate() {
            let path = dir.join(format!("env_{e}.csv"));
            let mut w = csv::Writer::from_path(&path)?;
            w.write_record(&header)?;
            for row in obs.row_iter() {
                w.write_record(row.iter().map(|x| format!("{x:e}")))?;
            }
            w.flush().map_err(|err| Error::io(&path, err))?;
            paths.push(path);
        }
        Ok(paths)
    }
}

fn stack_views<'a>(views: impl Iterator<Item = DMatrixView<'a, f64>>, cols: usize) -> DMatrix<f64> {
    let views: Vec<_> = views.collect();
    let rows: usize = views.iter().map(|v| v.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut offset = 0;
    for v in views {
        out.rows_mut(offset, v.nrows()).copy_from(&v);
        offset += v.nrows();
    }
    out
}

pub(crate) fn write_row_major(buf: &mut Vec<u8>, m: &DMatrix<f64>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            buf.write_all(&m[(i, j)].to_le_bytes()).expect("vec write");
        }
    }
}

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        ByteReader { bytes }
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() < n {
            return Err(Error::Format("unexpected end of data".into()));
        }
        let (head, tail) = self.bytes.split_at(n);
        self.bytes = tail;
        Ok(head)
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    pub(crate) fn matrix(&mut self, rows: usize, cols: usize) -> Result<DMatrix<f64>> {
        let len = rows
            .checked_mul(cols)
            .and_then(|k| k.checked_mul(8))
            .ok_or_else(|| Error::Format("matrix size overflow".into()))?;
        let raw = self.take(len)?;
        let values: Vec<f64> = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        Ok(DMatrix::from_row_slice(rows, cols, &values))
    }

    pub(crate) fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }
}
