use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::numerics::ComplexMatrix;
use crate::scalar::{Real, C};

/// Trainable parameters of one GCN-WMMSE layer.
#[derive(Clone, Debug, PartialEq)]
pub struct LayerParams<T> {
    /// Weight-filter taps `a_0 .. a_G`, non-negative.
    pub a_w: Vec<T>,
    pub a_v1: Vec<C<T>>,
    pub a_v0: Vec<C<T>>,
    pub b: Vec<T>,
    pub c: Vec<C<T>>,
    /// Skip map `F x F`; `None` for the first layer.
    pub d: Option<ComplexMatrix<T>>,
}

/// Parameters of an `L`-layer GCN-WMMSE network with `F` features and
/// weight-filter degree `G`.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterSet<T> {
    pub features: usize,
    pub degree: usize,
    /// Bias scaling, estimated during training and frozen afterwards.
    pub b_s: T,
    pub layers: Vec<LayerParams<T>>,
}

/// Number of (complex counted once) network parameters:
/// `L(4F + G + 1) + (L − 1)F²`.
pub fn param_count(layers: usize, features: usize, degree: usize) -> usize {
    layers * (4 * features + degree + 1) + layers.saturating_sub(1) * features * features
}

/// Number of real degrees of freedom (complex entries count twice).
pub fn real_dof(layers: usize, features: usize, degree: usize) -> usize {
    layers * (degree + 1 + 7 * features) + layers.saturating_sub(1) * 2 * features * features
}

fn gaussian<T: Real, R: Rng + ?Sized>(rng: &mut R, variance: f64) -> C<T> {
    let s = (variance / 2.0).sqrt();
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C::new(T::lit(s * re), T::lit(s * im))
}

impl<T: Real> ParameterSet<T> {
    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn param_count(&self) -> usize {
        param_count(self.num_layers(), self.features, self.degree)
    }

    pub fn real_dof(&self) -> usize {
        real_dof(self.num_layers(), self.features, self.degree)
    }

    /// Parameters under which every layer reproduces one classical WMMSE
    /// iteration: `a_W = e_1`, `a_V1 = c = e_0`, everything else zero.
    pub fn wmmse_equivalent(layers: usize, features: usize, degree: usize) -> Self {
        assert!(layers >= 1 && features >= 1 && degree >= 1);
        let e0 = |n: usize| {
            let mut v = vec![C::new(T::zero(), T::zero()); n];
            v[0] = C::new(T::one(), T::zero());
            v
        };
        let mut a_w = vec![T::zero(); degree + 1];
        a_w[1] = T::one();
        Self {
            features,
            degree,
            b_s: T::one(),
            layers: (0..layers)
                .map(|l| LayerParams {
                    a_w: a_w.clone(),
                    a_v1: e0(features),
                    a_v0: vec![C::new(T::zero(), T::zero()); features],
                    b: vec![T::zero(); features],
                    c: e0(features),
                    d: (l > 0).then(|| ComplexMatrix::zeros(features, features)),
                })
                .collect(),
        }
    }

    /// Random initialization: complex taps `CN(0, 1/F)`, biases and skip maps
    /// zero, weight taps `1/(G + 1)`, `b_S = 1`.
    pub fn random<R: Rng + ?Sized>(layers: usize, features: usize, degree: usize, rng: &mut R) -> Self {
        assert!(layers >= 1 && features >= 1);
        let var = 1.0 / features as f64;
        let taps = T::lit(1.0 / (degree + 1) as f64);
        let layers = (0..layers)
            .map(|l| {
                let a_v1 = (0..features).map(|_| gaussian(rng, var)).collect();
                let a_v0 = (0..features).map(|_| gaussian(rng, var)).collect();
                let c = (0..features).map(|_| gaussian(rng, var)).collect();
                LayerParams {
                    a_w: vec![taps; degree + 1],
                    a_v1,
                    a_v0,
                    b: vec![T::zero(); features],
                    c,
                    d: (l > 0).then(|| ComplexMatrix::zeros(features, features)),
                }
            })
            .collect();
        Self {
            features,
            degree,
            b_s: T::one(),
            layers,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let (f, g) = (self.features, self.degree);
        if self.layers.is_empty() || f == 0 {
            return Err(Error::Config("network needs at least one layer and one feature".into()));
        }
        if !(self.b_s > T::zero()) || !self.b_s.is_finite() {
            return Err(Error::Config(format!("b_S must be positive and finite, got {}", self.b_s)));
        }
        for (l, p) in self.layers.iter().enumerate() {
            let lens_ok = p.a_w.len() == g + 1
                && p.a_v1.len() == f
                && p.a_v0.len() == f
                && p.b.len() == f
                && p.c.len() == f;
            if !lens_ok {
                return Err(Error::Config(format!("layer {} has parameter vectors of the wrong length", l + 1)));
            }
            match (&p.d, l) {
                (None, 0) => {}
                (Some(d), l) if l > 0 && d.shape() == (f, f) => {}
                _ => {
                    return Err(Error::Config(format!(
                        "layer {} skip map must be {}",
                        l + 1,
                        if l == 0 { "absent".to_string() } else { format!("{f}x{f}") }
                    )))
                }
            }
            if p.a_w.iter().any(|&a| a < T::zero()) {
                return Err(Error::Config(format!("layer {} has a negative weight tap", l + 1)));
            }
            let finite = p.a_w.iter().chain(&p.b).all(|x| x.is_finite())
                && p.a_v1.iter().chain(&p.a_v0).chain(&p.c).all(|z| z.re.is_finite() && z.im.is_finite())
                && p.d.as_ref().map_or(true, |d| d.is_finite());
            if !finite {
                return Err(Error::Config(format!("layer {} has non-finite parameters", l + 1)));
            }
        }
        Ok(())
    }

    /// All trainable parameters as reals, layer by layer in the order
    /// `a_W, a_V1, a_V0, b, c, D` (complex entries as `re, im`; `D` row-major).
    /// `b_S` is not included.
    pub fn to_flat(&self) -> Vec<T> {
        let mut out = Vec::with_capacity(self.real_dof());
        let push_c = |out: &mut Vec<T>, v: &[C<T>]| {
            for z in v {
                out.push(z.re);
                out.push(z.im);
            }
        };
        for p in &self.layers {
            out.extend_from_slice(&p.a_w);
            push_c(&mut out, &p.a_v1);
            push_c(&mut out, &p.a_v0);
            out.extend_from_slice(&p.b);
            push_c(&mut out, &p.c);
            if let Some(d) = &p.d {
                push_c(&mut out, d.as_slice());
            }
        }
        out
    }

    /// Overwrites the trainable parameters from [`ParameterSet::to_flat`] layout.
    pub fn set_flat(&mut self, flat: &[T]) {
        assert_eq!(flat.len(), self.real_dof(), "flat parameter vector has the wrong length");
        let mut it = flat.iter().copied();
        let mut next = || it.next().unwrap();
        for p in &mut self.layers {
            for a in &mut p.a_w {
                *a = next();
            }
            for v in [&mut p.a_v1, &mut p.a_v0] {
                for z in v.iter_mut() {
                    *z = C::new(next(), next());
                }
            }
            for b in &mut p.b {
                *b = next();
            }
            for z in &mut p.c {
                *z = C::new(next(), next());
            }
            if let Some(d) = &mut p.d {
                for z in d.as_mut_slice() {
                    *z = C::new(next(), next());
                }
            }
        }
    }

    pub fn with_flat(&self, flat: &[T]) -> Self {
        let mut out = self.clone();
        out.set_flat(flat);
        out
    }

    /// Clamps negative weight taps to zero.
    pub fn project(&mut self) {
        for p in &mut self.layers {
            for a in &mut p.a_w {
                if *a < T::zero() {
                    *a = T::zero();
                }
            }
        }
    }

    pub fn cast<U: Real>(&self) -> ParameterSet<U> {
        let cc = |v: &[C<T>]| v.iter().map(|z| C::new(U::lit(z.re.to_f64_lossy()), U::lit(z.im.to_f64_lossy()))).collect();
        let rc = |v: &[T]| v.iter().map(|x| U::lit(x.to_f64_lossy())).collect();
        ParameterSet {
            features: self.features,
            degree: self.degree,
            b_s: U::lit(self.b_s.to_f64_lossy()),
            layers: self
                .layers
                .iter()
                .map(|p| LayerParams {
                    a_w: rc(&p.a_w),
                    a_v1: cc(&p.a_v1),
                    a_v0: cc(&p.a_v0),
                    b: rc(&p.b),
                    c: cc(&p.c),
                    d: p.d.as_ref().map(|d| d.cast()),
                })
                .collect(),
        }
    }
}

/// Step sizes `γ[ℓ][q]` of the unfolded projected-gradient baseline.
#[derive(Clone, Debug, PartialEq)]
pub struct PgdParameterSet<T> {
    pub gammas: Vec<Vec<T>>,
}

impl<T: Real> PgdParameterSet<T> {
    pub fn constant(layers: usize, substeps: usize, gamma: T) -> Self {
        Self {
            gammas: vec![vec![gamma; substeps]; layers],
        }
    }

    pub fn num_layers(&self) -> usize {
        self.gammas.len()
    }

    pub fn substeps(&self) -> usize {
        self.gammas.first().map_or(0, |g| g.len())
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.substeps();
        if self.gammas.is_empty() || q == 0 {
            return Err(Error::Config("PGD network needs at least one layer and one substep".into()));
        }
        if self.gammas.iter().any(|g| g.len() != q) {
            return Err(Error::Config("every PGD layer needs the same number of substeps".into()));
        }
        if self.gammas.iter().flatten().any(|&g| !(g > T::zero()) || !g.is_finite()) {
            return Err(Error::Config("PGD step sizes must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn to_flat(&self) -> Vec<T> {
        self.gammas.iter().flatten().copied().collect()
    }

    pub fn with_flat(&self, flat: &[T]) -> Self {
        let q = self.substeps();
        assert_eq!(flat.len(), self.num_layers() * q);
        Self {
            gammas: flat.chunks(q).map(|c| c.to_vec()).collect(),
        }
    }
}
