//! Datasets, joint input-output samples and min-max normalization.
//!
//! A regression observation `(x, y)` is treated as a single point
//! `z = [x, y]` in the joint space of dimension `D = k1 + k2`. Targets are
//! rescaled to `[0, 1]` before any geometry is computed so that distances in
//! the joint space are not dominated by the target's units.

use nalgebra::{DMatrix, DVector};

use crate::error::{CemsError, Result};

/// A regression dataset: `N` rows of `k1` features and `k2` targets.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    features: DMatrix<f64>,
    targets: DMatrix<f64>,
    feature_names: Vec<String>,
    target_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        features: DMatrix<f64>,
        targets: DMatrix<f64>,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        let n = features.nrows();
        if targets.nrows() != n {
            return Err(CemsError::Schema(format!(
                "features have {n} rows but targets have {}",
                targets.nrows()
            )));
        }
        if n < 2 {
            return Err(CemsError::Schema(format!("dataset needs at least 2 rows, got {n}")));
        }
        if features.ncols() == 0 {
            return Err(CemsError::Schema("dataset has no feature columns".into()));
        }
        if targets.ncols() == 0 {
            return Err(CemsError::Schema("dataset has no target columns".into()));
        }
        if feature_names.len() != features.ncols() || target_names.len() != targets.ncols() {
            return Err(CemsError::Schema("column names do not match column counts".into()));
        }
        check_finite(&features, "features")?;
        check_finite(&targets, "targets")?;
        Ok(Self {
            features,
            targets,
            feature_names,
            target_names,
        })
    }

    /// Builds a dataset with generated column names `x0..`, `y0..`.
    pub fn from_matrices(features: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        let feature_names = (0..features.ncols()).map(|i| format!("x{i}")).collect();
        let target_names = (0..targets.ncols()).map(|i| format!("y{i}")).collect();
        Self::new(features, targets, feature_names, target_names)
    }

    /// Splits an `N x D` joint matrix at column `k1`.
    pub fn from_joint(
        joint: &DMatrix<f64>,
        k1: usize,
        feature_names: Vec<String>,
        target_names: Vec<String>,
    ) -> Result<Self> {
        if k1 == 0 || k1 >= joint.ncols() {
            return Err(CemsError::Schema(format!(
                "cannot split {} joint columns at {k1}",
                joint.ncols()
            )));
        }
        let features = joint.columns(0, k1).into_owned();
        let targets = joint.columns(k1, joint.ncols() - k1).into_owned();
        Self::new(features, targets, feature_names, target_names)
    }

    pub fn len(&self) -> usize {
        self.features.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn target_dim(&self) -> usize {
        self.targets.ncols()
    }

    /// Ambient dimension `D = k1 + k2`.
    pub fn joint_dim(&self) -> usize {
        self.feature_dim() + self.target_dim()
    }

    pub fn features(&self) -> &DMatrix<f64> {
        &self.features
    }

    pub fn targets(&self) -> &DMatrix<f64> {
        &self.targets
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn target_names(&self) -> &[String] {
        &self.target_names
    }

    /// The `N x D` matrix whose row `i` is `[x_i, y_i]`.
    pub fn joint(&self) -> DMatrix<f64> {
        let (n, k1, k2) = (self.len(), self.feature_dim(), self.target_dim());
        DMatrix::from_fn(n, k1 + k2, |i, j| {
            if j < k1 {
                self.features[(i, j)]
            } else {
                self.targets[(i, j - k1)]
            }
        })
    }

    pub fn sample(&self, row: usize) -> JointSample {
        let z = DVector::from_iterator(
            self.joint_dim(),
            self.features
                .row(row)
                .iter()
                .chain(self.targets.row(row).iter())
                .copied(),
        );
        JointSample {
            z,
            feature_dim: self.feature_dim(),
        }
    }
}

fn check_finite(m: &DMatrix<f64>, what: &str) -> Result<()> {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            if !m[(i, j)].is_finite() {
                return Err(CemsError::Data(format!(
                    "non-finite {what} entry at row {i}, column {j}"
                )));
            }
        }
    }
    Ok(())
}

/// A point `z = [x, y]` on the joint input-output manifold.
#[derive(Debug, Clone, PartialEq)]
pub struct JointSample {
    z: DVector<f64>,
    feature_dim: usize,
}

impl JointSample {
    pub fn as_vector(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn dim(&self) -> usize {
        self.z.len()
    }

    pub fn features(&self) -> &[f64] {
        &self.z.as_slice()[..self.feature_dim]
    }

    pub fn targets(&self) -> &[f64] {
        &self.z.as_slice()[self.feature_dim..]
    }

    pub fn split(&self) -> (Vec<f64>, Vec<f64>) {
        (self.features().to_vec(), self.targets().to_vec())
    }
}

/// Concatenates a feature vector and a target vector into a joint sample.
pub fn concat_sample(x: &[f64], y: &[f64]) -> Result<JointSample> {
    if x.is_empty() {
        return Err(CemsError::Schema("feature vector is empty".into()));
    }
    if y.is_empty() {
        return Err(CemsError::Schema("target vector is empty".into()));
    }
    if let Some(v) = x.iter().chain(y).find(|v| !v.is_finite()) {
        return Err(CemsError::Data(format!("non-finite sample entry {v}")));
    }
    let z = DVector::from_iterator(x.len() + y.len(), x.iter().chain(y).copied());
    Ok(JointSample {
        z,
        feature_dim: x.len(),
    })
}

/// Affine map of one column onto `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColumnScale {
    pub min: f64,
    pub max: f64,
}

/// Constant columns are mapped to this value.
pub const CONSTANT_LEVEL: f64 = 0.5;

impl ColumnScale {
    pub fn fit(values: impl Iterator<Item = f64>) -> Self {
        let (min, max) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Self { min, max }
    }

    pub fn is_constant(&self) -> bool {
        self.max == self.min
    }

    pub fn forward(&self, v: f64) -> f64 {
        if self.is_constant() {
            CONSTANT_LEVEL
        } else {
            (v - self.min) / (self.max - self.min)
        }
    }

    pub fn inverse(&self, v: f64) -> f64 {
        if self.is_constant() {
            self.min
        } else {
            self.min + v * (self.max - self.min)
        }
    }
}

/// Per-column min-max statistics recorded by [`normalize`].
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizationState {
    pub targets: Vec<ColumnScale>,
    /// Present iff the features were rescaled as well.
    pub features: Option<Vec<ColumnScale>>,
}

impl NormalizationState {
    pub fn features_scaled(&self) -> bool {
        self.features.is_some()
    }

    /// The identity state: nothing was rescaled.
    pub fn identity(dataset: &Dataset) -> Self {
        let unit = ColumnScale { min: 0.0, max: 1.0 };
        Self {
            targets: vec![unit; dataset.target_dim()],
            features: None,
        }
    }

    /// Applies the recorded forward maps to an `n x D` joint matrix in place.
    pub fn normalize_joint(&self, joint: &mut DMatrix<f64>) -> Result<()> {
        self.map_joint(joint, ColumnScale::forward)
    }

    /// Applies the recorded inverse maps to an `n x D` joint matrix in place.
    pub fn denormalize_joint(&self, joint: &mut DMatrix<f64>) -> Result<()> {
        self.map_joint(joint, ColumnScale::inverse)
    }

    fn map_joint(&self, joint: &mut DMatrix<f64>, f: fn(&ColumnScale, f64) -> f64) -> Result<()> {
        let k2 = self.targets.len();
        if joint.ncols() <= k2 {
            return Err(CemsError::Schema(format!(
                "joint matrix has {} columns, state expects more than {k2}",
                joint.ncols()
            )));
        }
        let k1 = joint.ncols() - k2;
        if let Some(fs) = &self.features {
            if fs.len() != k1 {
                return Err(CemsError::Schema(format!(
                    "state records {} feature columns, matrix has {k1}",
                    fs.len()
                )));
            }
            for (j, s) in fs.iter().enumerate() {
                joint.column_mut(j).apply(|v| *v = f(s, *v));
            }
        }
        for (j, s) in self.targets.iter().enumerate() {
            joint.column_mut(k1 + j).apply(|v| *v = f(s, *v));
        }
        Ok(())
    }
}

fn scale_columns(m: &DMatrix<f64>) -> Vec<ColumnScale> {
    m.column_iter().map(|c| ColumnScale::fit(c.iter().copied())).collect()
}

fn apply_columns(m: &DMatrix<f64>, scales: &[ColumnScale], f: fn(&ColumnScale, f64) -> f64) -> DMatrix<f64> {
    let mut out = m.clone();
    for (j, s) in scales.iter().enumerate() {
        out.column_mut(j).apply(|v| *v = f(s, *v));
    }
    out
}

/// Min-max scales every target column to `[0, 1]`, and the feature columns
/// too when `scale_features` is set.
pub fn normalize(dataset: &Dataset, scale_features: bool) -> Result<(Dataset, NormalizationState)> {
    check_finite(dataset.features(), "features")?;
    check_finite(dataset.targets(), "targets")?;
    let targets = scale_columns(dataset.targets());
    let features = scale_features.then(|| scale_columns(dataset.features()));
    let new_targets = apply_columns(dataset.targets(), &targets, ColumnScale::forward);
    let new_features = match &features {
        Some(fs) => apply_columns(dataset.features(), fs, ColumnScale::forward),
        None => dataset.features().clone(),
    };
    let out = Dataset::new(
        new_features,
        new_targets,
        dataset.feature_names.clone(),
        dataset.target_names.clone(),
    )?;
    Ok((out, NormalizationState { targets, features }))
}

/// Min-max scales the targets only.
pub fn normalize_targets(dataset: &Dataset) -> Result<(Dataset, NormalizationState)> {
    normalize(dataset, false)
}

/// Inverts [`normalize`]: targets (and features, if they were scaled) are
/// mapped back to their original units.
pub fn denormalize_targets(dataset: &Dataset, state: &NormalizationState) -> Result<Dataset> {
    if state.targets.len() != dataset.target_dim() {
        return Err(CemsError::Schema(format!(
            "state records {} target columns, dataset has {}",
            state.targets.len(),
            dataset.target_dim()
        )));
    }
    let features = match &state.features {
        Some(fs) if fs.len() != dataset.feature_dim() => {
            return Err(CemsError::Schema(format!(
                "state records {} feature columns, dataset has {}",
                fs.len(),
                dataset.feature_dim()
            )))
        }
        Some(fs) => apply_columns(dataset.features(), fs, ColumnScale::inverse),
        None => dataset.features().clone(),
    };
    let targets = apply_columns(dataset.targets(), &state.targets, ColumnScale::inverse);
    Dataset::new(
        features,
        targets,
        dataset.feature_names.clone(),
        dataset.target_names.clone(),
    )
}
