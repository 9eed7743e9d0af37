//! One-dimensional quadrature rules used by the kernel checks and the
//! killed-transport oracle.

/// Gauss-Kronrod 7/15 abscissae on [-1, 1] (non-negative half, descending).
const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = fc * WGK[7];
    let mut gauss = fc * WG[3];
    for j in 0..7 {
        let dx = h * XGK[j];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[j] * s;
        if j % 2 == 1 {
            gauss += WG[j / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Adaptive Gauss-Kronrod integration with a global error budget.
///
/// Returns `(value, estimated_error)`. Intervals are bisected until each one
/// meets its share of the tolerance or `max_depth` is reached.
pub fn integrate<F: FnMut(f64) -> f64>(
    mut f: F,
    a: f64,
    b: f64,
    abs_tol: f64,
    max_depth: u32,
) -> (f64, f64) {
    if b <= a {
        return (0.0, 0.0);
    }
    let mut total = 0.0;
    let mut total_err = 0.0;
    let mut stack = vec![(a, b, 0u32)];
    let width = b - a;
    while let Some((lo, hi, depth)) = stack.pop() {
        let (val, err) = gk15(&mut f, lo, hi);
        let budget = abs_tol * (hi - lo) / width;
        if err <= budget.max(1e-15 * val.abs()) || depth >= max_depth {
            total += val;
            total_err += err;
        } else {
            let mid = 0.5 * (lo + hi);
            stack.push((lo, mid, depth + 1));
            stack.push((mid, hi, depth + 1));
        }
    }
    (total, total_err)
}

/// 16-point Gauss-Legendre nodes and weights on [-1, 1].
const GL16_X: [f64; 8] = [
    0.095_012_509_837_637_44,
    0.281_603_550_779_258_9,
    0.458_016_777_657_227_4,
    0.617_876_244_402_643_7,
    0.755_404_408_355_003,
    0.865_631_202_387_831_8,
    0.944_575_023_073_232_6,
    0.989_400_934_991_649_9,
];
const GL16_W: [f64; 8] = [
    0.189_450_610_455_068_5,
    0.182_603_415_044_923_6,
    0.169_156_519_395_002_5,
    0.149_595_988_816_576_7,
    0.124_628_971_255_533_9,
    0.095_158_511_682_492_78,
    0.062_253_523_938_647_89,
    0.027_152_459_411_754_09,
];

/// Nodes and weights of a composite 16-point Gauss-Legendre rule with
/// `panels` equal panels on [a, b].
pub fn composite_gauss_legendre(a: f64, b: f64, panels: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(panels * 16);
    let h = (b - a) / panels as f64;
    for p in 0..panels {
        let c = a + (p as f64 + 0.5) * h;
        let half = 0.5 * h;
        for k in 0..8 {
            out.push((c - half * GL16_X[k], half * GL16_W[k]));
            out.push((c + half * GL16_X[k], half * GL16_W[k]));
        }
    }
    out
}

/// Tensor-product Gauss-Legendre quadrature over a box, refined by doubling
/// the panel count in every direction until two successive estimates agree
/// to `rel_tol` (or `max_panels` is reached).
///
/// Returns `(value, |difference of the last two estimates|)`.
pub fn product_quadrature<F: FnMut(&[f64]) -> f64>(
    ranges: &[(f64, f64)],
    rel_tol: f64,
    max_panels: usize,
    mut f: F,
) -> (f64, f64) {
    let mut panels = 2;
    let mut prev = tensor_rule(ranges, panels, &mut f);
    loop {
        panels *= 2;
        let next = tensor_rule(ranges, panels, &mut f);
        let diff = (next - prev).abs();
        if diff <= rel_tol * next.abs().max(1e-300) || panels >= max_panels {
            return (next, diff);
        }
        prev = next;
    }
}

fn tensor_rule<F: FnMut(&[f64]) -> f64>(ranges: &[(f64, f64)], panels: usize, f: &mut F) -> f64 {
    let rules: Vec<Vec<(f64, f64)>> = ranges
        .iter()
        .map(|&(a, b)| composite_gauss_legendre(a, b, panels))
        .collect();
    let dim = ranges.len();
    let mut idx = vec![0usize; dim];
    let mut point = vec![0.0; dim];
    let mut total = 0.0;
    if rules.iter().any(|r| r.is_empty()) {
        return 0.0;
    }
    loop {
        let mut w = 1.0;
        for k in 0..dim {
            let (x, wk) = rules[k][idx[k]];
            point[k] = x;
            w *= wk;
        }
        total += w * f(&point);
        let mut k = 0;
        loop {
            if k == dim {
                return total;
            }
            idx[k] += 1;
            if idx[k] < rules[k].len() {
                break;
            }
            idx[k] = 0;
            k += 1;
        }
    }
}
