//! Seed data: the quadruple (g₁, h₁, H⋆, M⋆) with its exponent set and the
//! measured tame norms.

use crate::error::{Error, Result};
use crate::grid::{
    radius_field, weighted_norm, GridSpec, NormKind, ScalarField, SymTensorField, VectorField,
};
use crate::operators::constraint::constraint_with;
use crate::operators::geometry::{geometry, MetricField};

use super::exponents::ExponentSet;

/// A seed data set: approximate geometry (g₁, h₁) and matter targets
/// (H⋆, M⋆), with the decay exponents it claims to satisfy.
#[derive(Debug, Clone)]
pub struct SeedData {
    /// Seed metric with all cached geometric quantities.
    pub g1: MetricField,
    /// Seed extrinsic curvature.
    pub h1: SymTensorField,
    /// Target Hamiltonian data.
    pub h_star: ScalarField,
    /// Target momentum data.
    pub m_star: VectorField,
    pub exps: ExponentSet,
}

/// Measured weighted norms backing the tame-seed invariants.
#[derive(Debug, Clone, Copy)]
pub struct TameNorms {
    /// sup-type norm of g₁ − e at weight exponent p_G (two derivative levels).
    pub metric: f64,
    /// sup-type norm of h₁ at weight exponent q_G.
    pub extrinsic: f64,
    /// L² norm of H⋆ − H(g₁,h₁) at weight exponent p_M + 2.
    pub h_defect: f64,
    /// L² norm of M⋆ − M(g₁,h₁) at weight exponent q_M + 1.
    pub m_defect: f64,
}

impl SeedData {
    /// Build seed data from raw fields, validating metric positivity.
    pub fn new(
        g1: SymTensorField,
        h1: SymTensorField,
        h_star: ScalarField,
        m_star: VectorField,
        exps: ExponentSet,
    ) -> Result<Self> {
        h1.check_finite()?;
        h_star.check_finite()?;
        m_star.check_finite()?;
        let g1 = geometry(g1)?;
        Ok(SeedData { g1, h1, h_star, m_star, exps })
    }

    pub fn spec(&self) -> GridSpec {
        self.h_star.spec
    }

    /// The constraint defect (H⋆ − H(g₁,h₁), M⋆ − M(g₁,h₁)): the matter
    /// content the seed fails to account for.
    pub fn defect(&self) -> (ScalarField, VectorField) {
        let (h, m) = constraint_with(&self.g1, &self.h1);
        let mut dh = self.h_star.clone();
        dh.axpy(-1.0, &h);
        let mut dm = self.m_star.clone();
        dm.axpy(-1.0, &m);
        (dh, dm)
    }

    /// Measure the weighted norms that the tame-seed definition bounds.
    pub fn tame_norms(&self) -> Result<TameNorms> {
        let spec = self.spec();
        let radius = radius_field(spec);
        let mut dev = self.g1.g.clone();
        dev.axpy(-1.0, &SymTensorField::euclidean(spec));
        let metric = weighted_norm(&dev, NormKind::SupC, self.exps.p_g, 2, &radius)?;
        let extrinsic = weighted_norm(&self.h1, NormKind::SupC, self.exps.q_g, 2, &radius)?;
        let (dh, dm) = self.defect();
        let h_defect = weighted_norm(&dh, NormKind::L2, self.exps.p_m + 2.0, 0, &radius)?;
        let m_defect = weighted_norm(&dm, NormKind::L2, self.exps.q_m + 1.0, 0, &radius)?;
        Ok(TameNorms { metric, extrinsic, h_defect, m_defect })
    }

    /// Assert the tame bounds ‖g₁ − e‖ ≤ c·ε_G, ‖h₁‖ ≤ c·ε_G and the defect
    /// bounds ≤ c·ε_M for a given structure constant c.
    pub fn assert_tame(&self, c: f64) -> Result<TameNorms> {
        let n = self.tame_norms()?;
        let checks = [
            ("‖g₁ − e‖_{C,p_G}", n.metric, c * self.exps.eps_g),
            ("‖h₁‖_{C,q_G}", n.extrinsic, c * self.exps.eps_g),
            ("‖H⋆ − H(g₁,h₁)‖_{L²,p_M+2}", n.h_defect, c * self.exps.eps_m),
            ("‖M⋆ − M(g₁,h₁)‖_{L²,q_M+1}", n.m_defect, c * self.exps.eps_m),
        ];
        for (name, value, bound) in checks {
            if value > bound {
                return Err(Error::Config(format!(
                    "seed not tame: {name} = {value:.3e} exceeds {bound:.3e}"
                )));
            }
        }
        Ok(n)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::variational::check_exponents;
    use crate::variational::ExponentClass;

    fn flat_seed(spec: GridSpec) -> SeedData {
        SeedData::new(
            SymTensorField::euclidean(spec),
            SymTensorField::zeros(spec),
            ScalarField::zeros(spec),
            VectorField::zeros(spec),
            ExponentSet::default(),
        )
        .unwrap()
    }

    #[test]
    fn flat_seed_has_zero_defect_and_norms() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let seed = flat_seed(spec);
        let (dh, dm) = seed.defect();
        assert!(dh.max_abs() < 1e-12);
        assert!(dm.comps.iter().all(|c| c.max_abs() < 1e-12));
        let n = seed.assert_tame(1.0).unwrap();
        assert_eq!(n.metric, 0.0);
        assert_eq!(n.extrinsic, 0.0);
    }

    #[test]
    fn default_exponents_admissible() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let seed = flat_seed(spec);
        assert!(check_exponents(&seed.exps, ExponentClass::Admissible).passed());
    }

    #[test]
    fn degenerate_metric_rejected() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let mut g = SymTensorField::euclidean(spec);
        g.comps[0].scale(-1.0);
        assert!(SeedData::new(
            g,
            SymTensorField::zeros(spec),
            ScalarField::zeros(spec),
            VectorField::zeros(spec),
            ExponentSet::default(),
        )
        .is_err());
    }

    #[test]
    fn defect_reflects_targets() {
        let spec = GridSpec::new(17, 8.0).unwrap();
        let mut seed = flat_seed(spec);
        seed.h_star = ScalarField::constant(spec, 0.25);
        let (dh, _) = seed.defect();
        assert!((dh.max_abs() - 0.25).abs() < 1e-12);
    }
}
