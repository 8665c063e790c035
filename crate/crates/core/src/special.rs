//! Error function family after W. J. Cody's rational Chebyshev approximations
//! (Math. Comp. 23, 1969). Relative accuracy is close to machine epsilon.

const A: [f64; 5] = [
    3.161_123_743_870_565_6,
    113.864_154_151_050_16,
    377.485_237_685_302_02,
    3_209.377_589_138_469_5,
    0.185_777_706_184_603_15,
];
const B: [f64; 4] = [
    23.601_290_952_344_12,
    244.024_637_934_444_17,
    1_282.616_526_077_372_3,
    2_844.236_833_439_170_6,
];
const C: [f64; 9] = [
    0.564_188_496_988_670_1,
    8.883_149_794_388_376,
    66.119_190_637_141_63,
    298.635_138_197_400_13,
    881.952_221_241_769_1,
    1_712.047_612_634_070_6,
    2_051.078_377_826_071_5,
    1_230.339_354_797_997_2,
    2.153_115_354_744_038_5e-8,
];
const D: [f64; 8] = [
    15.744_926_110_709_835,
    117.693_950_891_312_5,
    537.181_101_862_009_9,
    1_621.389_574_566_690_2,
    3_290.799_235_733_459_6,
    4_362.619_090_143_247,
    3_439.367_674_143_721_6,
    1_230.339_354_803_749_4,
];
const P: [f64; 6] = [
    0.305_326_634_961_232_36,
    0.360_344_899_949_804_45,
    0.125_781_726_111_229_24,
    0.016_083_785_148_742_275,
    6.587_491_615_298_378e-4,
    0.016_315_387_137_302_097,
];
const Q: [f64; 5] = [
    2.568_520_192_289_822,
    1.872_952_849_923_460_4,
    0.527_905_102_951_428_4,
    0.060_518_341_312_441_32,
    0.002_335_204_976_268_691_8,
];

pub const FRAC_1_SQRT_PI: f64 = 0.564_189_583_547_756_3;
pub const SQRT_PI: f64 = 1.772_453_850_905_516;

const THRESHOLD: f64 = 0.468_75;
const XBIG: f64 = 26.543;
const XHUGE: f64 = 6.71e7;

fn small(z: f64) -> f64 {
    ((((A[4] * z + A[0]) * z + A[1]) * z + A[2]) * z + A[3])
        / ((((z + B[0]) * z + B[1]) * z + B[2]) * z + B[3])
}

fn middle(y: f64) -> f64 {
    let mut num = C[8] * y;
    let mut den = y;
    for i in 0..7 {
        num = (num + C[i]) * y;
        den = (den + D[i]) * y;
    }
    (num + C[7]) / (den + D[7])
}

fn tail(y: f64) -> f64 {
    if y >= XHUGE {
        return FRAC_1_SQRT_PI / y;
    }
    let z = 1.0 / (y * y);
    let mut num = P[5] * z;
    let mut den = z;
    for i in 0..4 {
        num = (num + P[i]) * z;
        den = (den + Q[i]) * z;
    }
    let r = z * (num + P[4]) / (den + Q[4]);
    (FRAC_1_SQRT_PI - r) / y
}

/// exp(-y^2) with the argument split at a multiple of 1/16 so that the
/// square does not lose bits.
fn exp_neg_square(y: f64) -> f64 {
    let yt = (y * 16.0).trunc() / 16.0;
    (-yt * yt).exp() * (-(y - yt) * (y + yt)).exp()
}

fn exp_pos_square(y: f64) -> f64 {
    let yt = (y * 16.0).trunc() / 16.0;
    (yt * yt).exp() * ((y - yt) * (y + yt)).exp()
}

/// erfcx(|x|) for |x| > THRESHOLD.
fn scaled_tail(y: f64) -> f64 {
    if y <= 4.0 {
        middle(y)
    } else {
        tail(y)
    }
}

/// erfc(|x|) for |x| > THRESHOLD.
fn erfc_abs(y: f64) -> f64 {
    if y >= XBIG {
        0.0
    } else {
        scaled_tail(y) * exp_neg_square(y)
    }
}

pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= THRESHOLD {
        return x * small(y * y);
    }
    let c = erfc_abs(y);
    if x < 0.0 {
        c - 1.0
    } else {
        1.0 - c
    }
}

pub fn erfc(x: f64) -> f64 {
    let y = x.abs();
    if y <= THRESHOLD {
        return 1.0 - x * small(y * y);
    }
    let c = erfc_abs(y);
    if x < 0.0 {
        2.0 - c
    } else {
        c
    }
}

/// Scaled complementary error function e^{x^2} erfc(x). Overflows to
/// infinity for x below about -26.6.
pub fn erfcx(x: f64) -> f64 {
    let y = x.abs();
    if y <= THRESHOLD {
        let z = y * y;
        return z.exp() * (1.0 - x * small(z));
    }
    let r = scaled_tail(y);
    if x < 0.0 {
        2.0 * exp_pos_square(y) - r
    } else {
        r
    }
}
