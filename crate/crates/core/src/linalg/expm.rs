//! Matrix exponential by scaling and squaring with a Padé approximant of
//! degree 3, 5, 7, 9 or 13, selected from the 1-norm of the argument.

use super::{identity, solve, CMat, C64};

const THETA: [(usize, f64); 4] = [
    (3, 1.495_585_217_958_292e-2),
    (5, 2.539_398_330_063_23e-1),
    (7, 9.504_178_996_162_932e-1),
    (9, 2.097_847_961_257_068),
];
const THETA_13: f64 = 5.371_920_351_148_152;

const B3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const B5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const B7: [f64; 8] = [
    17_297_280.0,
    8_648_640.0,
    1_995_840.0,
    277_200.0,
    25_200.0,
    1_512.0,
    56.0,
    1.0,
];
const B9: [f64; 10] = [
    17_643_225_600.0,
    8_821_612_800.0,
    2_075_673_600.0,
    302_702_400.0,
    30_270_240.0,
    2_162_160.0,
    110_880.0,
    3_960.0,
    90.0,
    1.0,
];
const B13: [f64; 14] = [
    64_764_752_532_480_000.0,
    32_382_376_266_240_000.0,
    7_771_770_303_897_600.0,
    1_187_353_796_428_800.0,
    129_060_195_264_000.0,
    10_559_470_521_600.0,
    670_442_572_800.0,
    33_522_128_640.0,
    1_323_241_920.0,
    40_840_800.0,
    960_960.0,
    16_380.0,
    182.0,
    1.0,
];

fn one_norm(a: &CMat) -> f64 {
    (0..a.ncols())
        .map(|j| a.column(j).iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

fn scaled(a: &CMat, s: f64) -> CMat {
    a.map(|z| z * s)
}

/// Padé approximant r_m(A) = q_m(A)^{-1} p_m(A) for m < 13.
fn pade_low(a: &CMat, b: &[f64]) -> CMat {
    let n = a.nrows();
    let eye = identity(n);
    let a2 = a * a;
    let mut u_even = scaled(&eye, b[1]);
    let mut v_even = scaled(&eye, b[0]);
    let mut pow = eye.clone();
    let m = b.len() - 1;
    let mut k = 2;
    while k <= m {
        pow = &pow * &a2;
        v_even += scaled(&pow, b[k]);
        if k < m {
            u_even += scaled(&pow, b[k + 1]);
        }
        k += 2;
    }
    let u = a * u_even;
    solve(&(&v_even - &u), &(&v_even + &u)).expect("Padé denominator is nonsingular in range")
}

fn pade13(a: &CMat) -> CMat {
    let n = a.nrows();
    let eye = identity(n);
    let a2 = a * a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let w1 = scaled(&a6, B13[13]) + scaled(&a4, B13[11]) + scaled(&a2, B13[9]);
    let w2 = &a6 * w1
        + scaled(&a6, B13[7])
        + scaled(&a4, B13[5])
        + scaled(&a2, B13[3])
        + scaled(&eye, B13[1]);
    let u = a * w2;
    let z1 = scaled(&a6, B13[12]) + scaled(&a4, B13[10]) + scaled(&a2, B13[8]);
    let v = &a6 * z1
        + scaled(&a6, B13[6])
        + scaled(&a4, B13[4])
        + scaled(&a2, B13[2])
        + scaled(&eye, B13[0]);
    solve(&(&v - &u), &(&v + &u)).expect("Padé denominator is nonsingular in range")
}

/// e^A for a square complex matrix.
pub fn expm(a: &CMat) -> CMat {
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    if n == 1 {
        return CMat::from_element(1, 1, a[(0, 0)].exp());
    }
    let norm = one_norm(a);
    if norm == 0.0 {
        return identity(n);
    }
    for (m, theta) in THETA {
        if norm <= theta {
            let b: &[f64] = match m {
                3 => &B3,
                5 => &B5,
                7 => &B7,
                _ => &B9,
            };
            return pade_low(a, b);
        }
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil().max(0.0) as i32
    } else {
        0
    };
    let scaled_a = scaled(a, 0.5f64.powi(s));
    let mut r = pade13(&scaled_a);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

/// The triple `(e^{-xA}, phi1(-xA), phi2(-xA))`, where
/// `phi1(Z) = int_0^1 e^{(1-s)Z} ds` and `phi2(Z) = int_0^1 e^{(1-s)Z} s ds`.
///
/// In terms of integrals of the semigroup:
/// `int_0^x e^{-yA} dy = x phi1(-xA)` and
/// `int_0^x int_0^y e^{-zA} dz dy = x^2 phi2(-xA)`.
#[derive(Clone, Debug)]
pub struct PhiTriple {
    pub exp: CMat,
    pub phi1: CMat,
    pub phi2: CMat,
}

/// Evaluates [`PhiTriple`] from one exponential of the block matrix
/// `[[-xA, I, 0], [0, 0, I], [0, 0, 0]]`.
pub fn phi_triple(a: &CMat, x: f64) -> PhiTriple {
    let n = a.nrows();
    if n == 1 {
        let z = -a[(0, 0)] * x;
        let (e, p1, p2) = scalar_phi(z);
        return PhiTriple {
            exp: CMat::from_element(1, 1, e),
            phi1: CMat::from_element(1, 1, p1),
            phi2: CMat::from_element(1, 1, p2),
        };
    }
    let mut big = CMat::zeros(3 * n, 3 * n);
    for i in 0..n {
        for j in 0..n {
            big[(i, j)] = -a[(i, j)] * x;
        }
        big[(i, n + i)] = C64::new(1.0, 0.0);
        big[(n + i, 2 * n + i)] = C64::new(1.0, 0.0);
    }
    let e = expm(&big);
    PhiTriple {
        exp: e.view((0, 0), (n, n)).into_owned(),
        phi1: e.view((0, n), (n, n)).into_owned(),
        phi2: e.view((0, 2 * n), (n, n)).into_owned(),
    }
}

/// `(e^z, (e^z - 1)/z, (e^z - 1 - z)/z^2)` without cancellation near zero.
pub(crate) fn scalar_phi(z: C64) -> (C64, C64, C64) {
    let e = z.exp();
    if z.norm() < 0.5 {
        // Taylor: phi1 = sum z^k/(k+1)!, phi2 = sum z^k/(k+2)!
        let mut p1 = C64::new(0.0, 0.0);
        let mut p2 = C64::new(0.0, 0.0);
        let mut term1 = C64::new(1.0, 0.0); // z^k/(k+1)!
        let mut term2 = C64::new(0.5, 0.0); // z^k/(k+2)!
        for k in 0..30 {
            p1 += term1;
            p2 += term2;
            let kf = k as f64;
            term1 = term1 * z / (kf + 2.0);
            term2 = term2 * z / (kf + 3.0);
        }
        (e, p1, p2)
    } else {
        let em1 = e - 1.0;
        (e, em1 / z, (em1 - z) / (z * z))
    }
}
