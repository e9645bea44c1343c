use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::lattice::Lattice;
use crate::error::{Error, Result};

pub const PARAMS_SCHEMA_VERSION: u32 = 1;

/// Baseline rates, excitation strengths and decay rates of the process.
///
/// `alpha[[w, src]]` is the jump in `λ_w` caused by an event of dimension
/// `src`; `beta[[w, src]]` is the matching decay rate.
#[derive(Debug, Clone, PartialEq)]
pub struct HawkesParams {
    lattice: Lattice,
    mu: Vec<f64>,
    alpha: Array2<f64>,
    beta: Array2<f64>,
}

impl HawkesParams {
    pub fn new(lattice: Lattice, mu: Vec<f64>, alpha: Array2<f64>, beta: Array2<f64>) -> Result<Self> {
        let d = lattice.dims();
        if mu.len() != d {
            return Err(Error::domain("mu", format!("expected {d} entries, got {}", mu.len())));
        }
        if alpha.dim() != (d, d) {
            return Err(Error::domain("alpha", format!("expected {d}x{d}, got {:?}", alpha.dim())));
        }
        if beta.dim() != (d, d) {
            return Err(Error::domain("beta", format!("expected {d}x{d}, got {:?}", beta.dim())));
        }
        if let Some(m) = mu.iter().find(|m| !(m.is_finite() && **m >= 0.0)) {
            return Err(Error::domain("mu", format!("{m} must be finite and >= 0")));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a >= 0.0)) {
            return Err(Error::domain("alpha", format!("{a} must be finite and >= 0")));
        }
        if let Some(b) = beta.iter().find(|b| !(b.is_finite() && **b > 0.0)) {
            return Err(Error::domain("beta", format!("{b} must be finite and > 0")));
        }
        Ok(HawkesParams {
            lattice,
            mu,
            alpha,
            beta,
        })
    }

    /// Constant-valued parameters; handy for tests and initialisation.
    pub fn uniform(lattice: Lattice, mu: f64, alpha: f64, beta: f64) -> Result<Self> {
        let d = lattice.dims();
        Self::new(
            lattice,
            vec![mu; d],
            Array2::from_elem((d, d), alpha),
            Array2::from_elem((d, d), beta),
        )
    }

    pub fn lattice(&self) -> Lattice {
        self.lattice
    }

    pub fn dims(&self) -> usize {
        self.mu.len()
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn alpha(&self) -> &Array2<f64> {
        &self.alpha
    }

    pub fn beta(&self) -> &Array2<f64> {
        &self.beta
    }

    /// Mutable access for optimisers. Callers must restore feasibility
    /// (see `project`) before handing the parameters out again.
    pub(crate) fn parts_mut(&mut self) -> (&mut Vec<f64>, &mut Array2<f64>, &mut Array2<f64>) {
        (&mut self.mu, &mut self.alpha, &mut self.beta)
    }

    /// Clips every entry back into the feasible box.
    pub(crate) fn project(&mut self, min_mu: f64, min_beta: f64) {
        for m in &mut self.mu {
            *m = m.max(min_mu);
        }
        self.alpha.mapv_inplace(|a| a.max(0.0));
        self.beta.mapv_inplace(|b| b.max(min_beta));
    }

    pub fn is_feasible(&self) -> bool {
        self.mu.iter().all(|m| m.is_finite() && *m >= 0.0)
            && self.alpha.iter().all(|a| a.is_finite() && *a >= 0.0)
            && self.beta.iter().all(|b| b.is_finite() && *b > 0.0)
    }

    /// Per-dimension branching ratios `Σ_src α/β` and the subcriticality flag.
    pub fn stability_margin(&self) -> StabilityReport {
        let rows: Vec<RowStability> = (0..self.dims())
            .map(|w| {
                let row_sum: f64 = self
                    .alpha
                    .row(w)
                    .iter()
                    .zip(self.beta.row(w))
                    .map(|(a, b)| a / b)
                    .sum();
                RowStability {
                    row_sum,
                    stable: row_sum < 1.0,
                }
            })
            .collect();
        let stable = rows.iter().all(|r| r.stable);
        StabilityReport { rows, stable }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ParamsDocument::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let doc: ParamsDocument = serde_json::from_str(text)?;
        doc.try_into()
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()? + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RowStability {
    pub row_sum: f64,
    pub stable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub rows: Vec<RowStability>,
    pub stable: bool,
}

/// On-disk form of `HawkesParams`.
#[derive(Debug, Serialize, Deserialize)]
struct ParamsDocument {
    schema_version: u32,
    levels: u32,
    sentiments: u32,
    mu: Vec<f64>,
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
}

impl From<&HawkesParams> for ParamsDocument {
    fn from(p: &HawkesParams) -> Self {
        let rows = |m: &Array2<f64>| m.outer_iter().map(|r| r.to_vec()).collect();
        ParamsDocument {
            schema_version: PARAMS_SCHEMA_VERSION,
            levels: p.lattice.levels,
            sentiments: p.lattice.sentiments,
            mu: p.mu.clone(),
            alpha: rows(&p.alpha),
            beta: rows(&p.beta),
        }
    }
}

impl TryFrom<ParamsDocument> for HawkesParams {
    type Error = Error;

    fn try_from(doc: ParamsDocument) -> Result<Self> {
        if doc.schema_version != PARAMS_SCHEMA_VERSION {
            return Err(Error::Format(format!(
                "unsupported parameter schema version {}",
                doc.schema_version
            )));
        }
        let lattice = Lattice::new(doc.levels, doc.sentiments)?;
        let d = lattice.dims();
        let matrix = |name: &'static str, rows: Vec<Vec<f64>>| -> Result<Array2<f64>> {
            if rows.len() != d || rows.iter().any(|r| r.len() != d) {
                return Err(Error::domain(name, format!("expected a {d}x{d} matrix")));
            }
            Ok(Array2::from_shape_vec((d, d), rows.into_iter().flatten().collect())
                .expect("shape checked"))
        };
        HawkesParams::new(lattice, doc.mu, matrix("alpha", doc.alpha)?, matrix("beta", doc.beta)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use proptest::prelude::*;

    fn one_dim(alpha: f64, beta: f64) -> HawkesParams {
        HawkesParams::new(
            Lattice::new(1, 1).unwrap(),
            vec![0.5],
            array![[alpha]],
            array![[beta]],
        )
        .unwrap()
    }

    #[test]
    fn stability_examples() {
        let zero = HawkesParams::uniform(Lattice::default(), 0.1, 0.0, 1.0).unwrap();
        let r = zero.stability_margin();
        assert!(r.stable);
        assert!(r.rows.iter().all(|row| row.row_sum == 0.0));

        let sub = one_dim(0.8, 1.0).stability_margin();
        assert_eq!(sub.rows[0].row_sum, 0.8);
        assert!(sub.stable);

        let sup = one_dim(1.2, 1.0).stability_margin();
        assert_eq!(sup.rows[0].row_sum, 1.2);
        assert!(!sup.stable);
    }

    #[test]
    fn rejects_infeasible() {
        let lat = Lattice::new(1, 1).unwrap();
        assert!(HawkesParams::new(lat, vec![-0.1], array![[0.0]], array![[1.0]]).is_err());
        assert!(HawkesParams::new(lat, vec![0.1], array![[-0.1]], array![[1.0]]).is_err());
        assert!(HawkesParams::new(lat, vec![0.1], array![[0.1]], array![[0.0]]).is_err());
        assert!(HawkesParams::new(lat, vec![0.1, 0.2], array![[0.1]], array![[1.0]]).is_err());
        assert!(HawkesParams::new(lat, vec![0.0], array![[0.0]], array![[1.0]]).is_ok());
    }

    proptest! {
        #[test]
        fn json_round_trip_is_bit_exact(
            levels in 1u32..3,
            sentiments in 1u32..4,
            seed in prop::collection::vec(0.0f64..1e3, 81 * 3),
        ) {
            let lat = Lattice::new(levels, sentiments).unwrap();
            let d = lat.dims();
            let mu = seed[..d].iter().map(|x| x / 7.0).collect();
            let alpha = Array2::from_shape_fn((d, d), |(i, j)| seed[d + i * d + j] / 3.0);
            let beta = Array2::from_shape_fn((d, d), |(i, j)| seed[2 * d * d + i * d + j].sqrt() + 1e-3);
            let p = HawkesParams::new(lat, mu, alpha, beta).unwrap();
            let back = HawkesParams::from_json(&p.to_json().unwrap()).unwrap();
            prop_assert_eq!(&back, &p);
            for (a, b) in back.mu().iter().zip(p.mu()) {
                prop_assert_eq!(a.to_bits(), b.to_bits());
            }
        }
    }
}
