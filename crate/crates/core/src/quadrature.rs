//! Globally adaptive Gauss–Kronrod (7/15) quadrature for small vector-valued
//! integrands.
//!
//! All components of the integrand share the same subdivision. An interval is
//! bisected while any component's accumulated error exceeds
//! `max(abs_tol, rel_tol * |I|)`. Semi-infinite pieces are mapped onto `[0, 1)`
//! with `y = y0 ± u / (1 - u)`.

use crate::scalar::Real;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];

const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];

// Gauss weights for XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

/// Tolerances and subdivision budget for adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadratureConfig<T> {
    pub rel_tol: T,
    pub abs_tol: T,
    pub max_subdivisions: usize,
}

impl<T: Real> Default for QuadratureConfig<T> {
    /// `rel_tol = 1e-9` and `abs_tol = 1e-12`, loosened to a small multiple of
    /// machine epsilon for single precision.
    fn default() -> Self {
        let eps = T::epsilon();
        QuadratureConfig {
            rel_tol: T::lit(1e-9).max(eps * T::lit(64.0)),
            abs_tol: T::lit(1e-12).max(eps * T::lit(1e-3)),
            max_subdivisions: 2000,
        }
    }
}

impl<T: Real> QuadratureConfig<T> {
    pub fn validate(&self) -> crate::Result<()> {
        if !(self.rel_tol > T::zero()) || !(self.abs_tol > T::zero()) {
            return crate::error::usage("quadrature tolerances must be positive");
        }
        if self.max_subdivisions == 0 {
            return crate::error::usage("max_subdivisions must be at least 1");
        }
        Ok(())
    }
}

/// One piece of the integration domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Piece<T> {
    Finite(T, T),
    /// `[start, +inf)`
    UpperTail(T),
    /// `(-inf, end]`
    LowerTail(T),
}

/// Result of an adaptive integration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Estimate<T, const N: usize> {
    pub value: [T; N],
    pub error: [T; N],
    pub subdivisions: usize,
    pub converged: bool,
}

#[derive(Clone, Copy)]
struct Segment<T, const N: usize> {
    piece: usize,
    lo: T,
    hi: T,
    value: [T; N],
    error: [T; N],
}

/// Maps the unit-interval parameter of a piece back to the integration
/// variable and returns `(y, dy/du)`.
#[inline]
fn map_point<T: Real>(piece: &Piece<T>, u: T) -> (T, T) {
    match *piece {
        Piece::Finite(..) => (u, T::one()),
        Piece::UpperTail(a) => {
            let om = T::one() - u;
            (a + u / om, T::one() / (om * om))
        }
        Piece::LowerTail(b) => {
            let om = T::one() - u;
            (b - u / om, T::one() / (om * om))
        }
    }
}

fn gk15<T: Real, const N: usize, F>(f: &F, piece: &Piece<T>, lo: T, hi: T) -> ([T; N], [T; N])
where
    F: Fn(T) -> [T; N],
{
    let half = T::lit(0.5);
    let center = half * (lo + hi);
    let half_len = half * (hi - lo);
    let eval = |u: T| -> [T; N] {
        let (y, jac) = map_point(piece, u);
        let mut v = f(y);
        for c in v.iter_mut() {
            *c = *c * jac;
        }
        v
    };

    let fc = eval(center);
    let mut kron = [T::zero(); N];
    let mut gauss = [T::zero(); N];
    let mut resabs = [T::zero(); N];
    let mut fv1 = [[T::zero(); N]; 7];
    let mut fv2 = [[T::zero(); N]; 7];
    for c in 0..N {
        kron[c] = fc[c] * T::lit(WGK[7]);
        gauss[c] = fc[c] * T::lit(WG[3]);
        resabs[c] = fc[c].abs() * T::lit(WGK[7]);
    }
    for j in 0..7 {
        let dx = half_len * T::lit(XGK[j]);
        let f1 = eval(center - dx);
        let f2 = eval(center + dx);
        let wk = T::lit(WGK[j]);
        for c in 0..N {
            kron[c] = kron[c] + wk * (f1[c] + f2[c]);
            resabs[c] = resabs[c] + wk * (f1[c].abs() + f2[c].abs());
            if j % 2 == 1 {
                gauss[c] = gauss[c] + T::lit(WG[j / 2]) * (f1[c] + f2[c]);
            }
        }
        fv1[j] = f1;
        fv2[j] = f2;
    }

    let mut value = [T::zero(); N];
    let mut error = [T::zero(); N];
    let eps50 = T::epsilon() * T::lit(50.0);
    for c in 0..N {
        let mean = kron[c] * half;
        let mut resasc = T::lit(WGK[7]) * (fc[c] - mean).abs();
        for j in 0..7 {
            resasc = resasc + T::lit(WGK[j]) * ((fv1[j][c] - mean).abs() + (fv2[j][c] - mean).abs());
        }
        let hl = half_len.abs();
        let resasc = resasc * hl;
        let resabs = resabs[c] * hl;
        let mut err = ((kron[c] - gauss[c]) * half_len).abs();
        if resasc != T::zero() && err != T::zero() {
            let scale = (T::lit(200.0) * err / resasc).powf(T::lit(1.5));
            err = resasc * scale.min(T::one());
        }
        if resabs > T::min_positive_value() / eps50 {
            err = err.max(eps50 * resabs);
        }
        value[c] = kron[c] * half_len;
        error[c] = err;
    }
    (value, error)
}

/// Integrates `f` over the union of `pieces`.
///
/// Always returns the best available estimate; `converged` is false when the
/// subdivision budget ran out first.
pub fn integrate<T, const N: usize, F>(
    f: F,
    pieces: &[Piece<T>],
    config: &QuadratureConfig<T>,
) -> Estimate<T, N>
where
    T: Real,
    F: Fn(T) -> [T; N],
{
    let mut segments: Vec<Segment<T, N>> = Vec::with_capacity(4 * pieces.len() + 16);
    for (k, piece) in pieces.iter().enumerate() {
        let (lo, hi) = match *piece {
            Piece::Finite(a, b) => (a, b),
            _ => (T::zero(), T::one()),
        };
        let (value, error) = gk15(&f, piece, lo, hi);
        segments.push(Segment { piece: k, lo, hi, value, error });
    }

    let mut subdivisions = 0;
    loop {
        let mut total = [T::zero(); N];
        let mut total_err = [T::zero(); N];
        for s in &segments {
            for c in 0..N {
                total[c] = total[c] + s.value[c];
                total_err[c] = total_err[c] + s.error[c];
            }
        }
        let tol: [T; N] =
            std::array::from_fn(|c| config.abs_tol.max(config.rel_tol * total[c].abs()));
        let converged = (0..N).all(|c| total[c].is_finite() && total_err[c] <= tol[c]);
        if converged || subdivisions >= config.max_subdivisions {
            return Estimate { value: total, error: total_err, subdivisions, converged };
        }

        // Bisect the segment contributing most to the worst component.
        let mut worst = 0;
        let mut worst_score = T::neg_infinity();
        for (i, s) in segments.iter().enumerate() {
            let score = (0..N)
                .map(|c| s.error[c] / tol[c])
                .fold(T::neg_infinity(), T::max);
            if score > worst_score {
                worst_score = score;
                worst = i;
            }
        }
        let seg = segments.swap_remove(worst);
        let mid = T::lit(0.5) * (seg.lo + seg.hi);
        if !(mid > seg.lo && mid < seg.hi) {
            // Interval exhausted at machine resolution.
            return Estimate { value: total, error: total_err, subdivisions, converged: false };
        }
        let piece = &pieces[seg.piece];
        let (v1, e1) = gk15(&f, piece, seg.lo, mid);
        let (v2, e2) = gk15(&f, piece, mid, seg.hi);
        segments.push(Segment { piece: seg.piece, lo: seg.lo, hi: mid, value: v1, error: e1 });
        segments.push(Segment { piece: seg.piece, lo: mid, hi: seg.hi, value: v2, error: e2 });
        subdivisions += 1;
    }
}

/// Scalar convenience wrapper around [`integrate`].
pub fn integrate_scalar<T: Real, F: Fn(T) -> T>(
    f: F,
    pieces: &[Piece<T>],
    config: &QuadratureConfig<T>,
) -> Estimate<T, 1> {
    integrate(|y| [f(y)], pieces, config)
}
