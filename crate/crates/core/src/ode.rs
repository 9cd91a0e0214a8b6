//! Dormand–Prince 8(5,3) explicit Runge–Kutta integrator with adaptive
//! step size, specialised to small fixed-size real systems.
//!
//! Coefficients are those of Hairer's `DOP853`. Stage 12 is evaluated at
//! `x + h`.

#![allow(clippy::excessive_precision)]

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OdeError {
    #[error("step size underflow at x = {x}")]
    StepSizeUnderflow { x: f64 },
    #[error("maximum number of steps ({max_steps}) reached at x = {x}")]
    TooManySteps { x: f64, max_steps: usize },
    #[error("non-finite state at x = {x}")]
    NonFinite { x: f64 },
}

/// Integrator settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dop853 {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on `|h|`; `f64::INFINITY` for none.
    pub h_max: f64,
    pub max_steps: usize,
}

impl Default for Dop853 {
    fn default() -> Self {
        Self { rtol: 1e-10, atol: 1e-12, h_max: f64::INFINITY, max_steps: 200_000 }
    }
}

/// What the per-step observer asks the integrator to do next.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepAction {
    Continue,
    /// Multiply the state by the factor. Only valid for linear
    /// homogeneous systems, where the derivative scales with the state.
    Rescale(f64),
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OdeStats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C: [f64; 12] = [
    0.0,
    0.526_001_519_587_677_318_785_587_544_488e-1,
    0.789_002_279_381_515_978_178_381_316_732e-1,
    0.118_350_341_907_227_396_726_757_197_510,
    0.281_649_658_092_772_603_273_242_802_490,
    0.333_333_333_333_333_333_333_333_333_333,
    0.25,
    0.307_692_307_692_307_692_307_692_307_692,
    0.651_282_051_282_051_282_051_282_051_282,
    0.6,
    0.857_142_857_142_857_142_857_142_857_142,
    1.0,
];

const A: [[f64; 11]; 11] = [
    [5.260_015_195_876_773_187_855_875_444_88e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [1.972_505_698_453_789_945_445_953_291_83e-2, 5.917_517_095_361_369_836_337_859_875_49e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [2.958_758_547_680_684_918_168_929_937_75e-2, 0.0, 8.876_275_643_042_054_754_506_789_813_24e-2, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [
        2.413_651_341_592_666_855_023_697_986_65e-1,
        0.0,
        -8.845_494_793_282_860_853_448_649_627_17e-1,
        9.248_340_032_617_920_031_157_379_665_43e-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.703_703_703_703_703_703_703_703_703_7e-2,
        0.0,
        0.0,
        1.708_286_087_294_738_712_796_044_821_73e-1,
        1.254_676_875_668_224_250_166_918_141_23e-1,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.710_937_5e-2,
        0.0,
        0.0,
        1.702_522_110_195_440_393_149_780_602_72e-1,
        6.021_653_898_045_596_068_502_193_972_83e-2,
        -1.757_812_5e-2,
        0.0,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        3.709_200_011_850_479_271_087_793_198_36e-2,
        0.0,
        0.0,
        1.703_839_257_122_399_938_102_140_547_05e-1,
        1.072_620_304_463_732_846_518_091_991_68e-1,
        -1.531_943_774_862_440_175_279_361_582_36e-2,
        8.273_789_163_814_022_887_584_737_660_02e-3,
        0.0,
        0.0,
        0.0,
        0.0,
    ],
    [
        6.241_109_587_160_757_171_144_295_778_12e-1,
        0.0,
        0.0,
        -3.360_892_629_446_941_294_068_571_098_25,
        -8.682_193_468_417_260_068_181_898_914_53e-1,
        2.759_209_969_944_670_830_494_156_007_97e1,
        2.015_406_755_047_789_340_861_867_889_79e1,
        -4.348_988_418_106_995_884_773_662_551_44e1,
        0.0,
        0.0,
        0.0,
    ],
    [
        4.776_625_364_382_643_658_904_339_085_27e-1,
        0.0,
        0.0,
        -2.488_114_619_971_667_641_926_425_864_68,
        -5.902_908_268_368_429_963_714_464_757_43e-1,
        2.123_005_144_818_119_423_472_889_498_97e1,
        1.527_923_363_288_242_358_325_969_229_38e1,
        -3.328_821_096_898_486_291_944_532_655_87e1,
        -2.033_120_170_850_862_613_582_229_285_93e-2,
        0.0,
        0.0,
    ],
    [
        -9.371_424_300_859_873_257_170_402_165_8e-1,
        0.0,
        0.0,
        5.186_372_428_844_063_708_300_238_532_09,
        1.091_437_348_996_729_578_185_002_546_54,
        -8.149_787_010_746_926_125_139_972_673_57,
        -1.852_006_565_999_695_986_415_661_807_01e1,
        2.273_948_709_935_050_428_189_700_567_34e1,
        2.493_605_552_679_652_389_870_893_967_62,
        -3.046_764_471_898_219_500_382_366_902_2,
        0.0,
    ],
    [
        2.273_310_147_516_538_207_923_597_684_49,
        0.0,
        0.0,
        -1.053_449_546_673_725_019_840_666_898_79e1,
        -2.000_872_058_224_862_499_096_757_184_44,
        -1.795_893_186_311_879_891_727_659_505_34e1,
        2.794_888_452_941_996_005_084_998_088_37e1,
        -2.858_998_277_135_023_694_740_655_086_74,
        -8.872_856_933_530_629_544_335_492_892_58,
        1.236_056_717_579_430_306_472_662_015_28e1,
        6.433_927_460_157_635_303_559_704_840_46e-1,
    ],
];

const B: [f64; 12] = [
    5.429_373_411_656_876_223_805_357_663_63e-2,
    0.0,
    0.0,
    0.0,
    0.0,
    4.450_312_892_752_408_881_441_139_505_66,
    1.891_517_899_314_500_383_042_815_990_44,
    -5.801_203_960_010_584_781_467_211_422_7,
    3.111_643_669_578_198_944_089_160_623_7e-1,
    -1.521_609_496_625_160_785_561_788_068_05e-1,
    2.013_654_008_040_303_483_747_765_375_01e-1,
    4.471_061_572_777_259_051_768_855_690_43e-2,
];

const BHH: [f64; 3] =
    [0.244_094_488_188_976_377_952_755_905_512, 0.733_846_688_281_611_857_341_361_741_547, 0.220_588_235_294_117_647_058_823_529_412e-1];

const E: [f64; 12] = [
    0.131_200_449_941_948_807_325_010_299_6e-1,
    0.0,
    0.0,
    0.0,
    0.0,
    -0.122_515_644_637_620_444_072_056_975_3e1,
    -0.495_758_949_657_250_191_521_407_995_2,
    0.166_437_718_245_498_653_696_153_041_5e1,
    -0.350_328_848_749_973_681_688_648_729_0,
    0.334_179_118_713_017_479_029_731_884_1,
    0.819_232_064_851_157_124_657_074_261_3e-1,
    -0.223_553_078_638_862_952_588_442_784_5e-1,
];

impl Dop853 {
    #[must_use]
    pub fn with_rtol(mut self, rtol: f64) -> Self {
        self.rtol = rtol;
        self
    }

    #[must_use]
    pub fn with_atol(mut self, atol: f64) -> Self {
        self.atol = atol;
        self
    }

    #[must_use]
    pub fn with_h_max(mut self, h_max: f64) -> Self {
        self.h_max = h_max;
        self
    }

    /// Integrates `y' = rhs(x, y)` from `x0` to `x_end > x0`, starting with
    /// step `h0` (estimated when nonpositive). After every accepted step the
    /// observer sees the new point and may request a rescaling.
    ///
    /// # Errors
    /// Step-size underflow, step budget exhaustion or a non-finite state.
    #[allow(clippy::too_many_arguments)]
    pub fn integrate<const N: usize, F, O>(
        &self,
        mut rhs: F,
        x0: f64,
        y0: [f64; N],
        x_end: f64,
        h0: f64,
        mut observer: O,
        stats: &mut OdeStats,
    ) -> Result<[f64; N], OdeError>
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
        O: FnMut(f64, &[f64; N]) -> StepAction,
    {
        let mut x = x0;
        let mut y = y0;
        if x_end <= x0 {
            return Ok(y);
        }
        let mut k = [[0.0; N]; 12];
        k[0] = rhs(x, &y);
        stats.evaluations += 1;
        let mut h = if h0 > 0.0 { h0 } else { self.initial_step(&mut rhs, x, &y, &k[0], x_end, stats) };
        h = h.min(self.h_max).min(x_end - x0);
        let mut steps = 0usize;
        let mut reject_streak = false;
        let mut last = false;

        while !last {
            if steps >= self.max_steps {
                return Err(OdeError::TooManySteps { x, max_steps: self.max_steps });
            }
            if 0.1 * h.abs() <= f64::EPSILON * x.abs() {
                return Err(OdeError::StepSizeUnderflow { x });
            }
            if x + 1.01 * h >= x_end {
                h = x_end - x;
                last = true;
            }
            steps += 1;

            for s in 1..12 {
                let mut ys = y;
                for (j, kj) in k.iter().enumerate().take(s) {
                    let a = A[s - 1][j];
                    if a != 0.0 {
                        for i in 0..N {
                            ys[i] += h * a * kj[i];
                        }
                    }
                }
                k[s] = rhs(x + C[s] * h, &ys);
            }
            stats.evaluations += 11;

            let mut y8 = [0.0; N];
            let mut err5 = [0.0; N];
            for i in 0..N {
                let mut acc = 0.0;
                let mut e = 0.0;
                for s in 0..12 {
                    acc += B[s] * k[s][i];
                    e += E[s] * k[s][i];
                }
                y8[i] = acc;
                err5[i] = e;
            }
            let mut y_new = [0.0; N];
            for i in 0..N {
                y_new[i] = y[i] + h * y8[i];
            }

            let mut err = 0.0;
            let mut err2 = 0.0;
            for i in 0..N {
                let sc = self.atol + y[i].abs().max(y_new[i].abs()) * self.rtol;
                let e3 = y8[i] - BHH[0] * k[0][i] - BHH[1] * k[8][i] - BHH[2] * k[11][i];
                err += (err5[i] / sc).powi(2);
                err2 += (e3 / sc).powi(2);
            }
            let mut deno = err + 0.01 * err2;
            if deno <= 0.0 {
                deno = 1.0;
            }
            let err = h.abs() * err * (1.0 / (deno * N as f64)).sqrt();
            if !err.is_finite() {
                h *= 0.25;
                last = false;
                stats.rejected += 1;
                continue;
            }

            let fac = (0.9 * err.powf(-1.0 / 8.0)).clamp(1.0 / 3.0, 6.0);
            if err <= 1.0 {
                stats.accepted += 1;
                x += h;
                y = y_new;
                k[0] = rhs(x, &y);
                stats.evaluations += 1;
                if !y.iter().all(|v| v.is_finite()) {
                    return Err(OdeError::NonFinite { x });
                }
                if let StepAction::Rescale(factor) = observer(x, &y) {
                    for i in 0..N {
                        y[i] *= factor;
                        k[0][i] *= factor;
                    }
                }
                let mut h_new = h * fac;
                if reject_streak {
                    h_new = h_new.min(h);
                }
                reject_streak = false;
                h = h_new.min(self.h_max);
            } else {
                stats.rejected += 1;
                reject_streak = true;
                last = false;
                h *= fac.min(1.0);
            }
        }
        Ok(y)
    }

    fn initial_step<const N: usize, F>(&self, rhs: &mut F, x: f64, y: &[f64; N], f0: &[f64; N], x_end: f64, stats: &mut OdeStats) -> f64
    where
        F: FnMut(f64, &[f64; N]) -> [f64; N],
    {
        let mut dnf = 0.0;
        let mut dny = 0.0;
        for i in 0..N {
            let sk = self.atol + self.rtol * y[i].abs();
            dnf += (f0[i] / sk).powi(2);
            dny += (y[i] / sk).powi(2);
        }
        let mut h = if dnf <= 1e-10 || dny <= 1e-10 { 1e-6 } else { (dny / dnf).sqrt() * 0.01 };
        h = h.min(self.h_max).min(x_end - x);
        let mut y1 = [0.0; N];
        for i in 0..N {
            y1[i] = y[i] + h * f0[i];
        }
        let f1 = rhs(x + h, &y1);
        stats.evaluations += 1;
        let mut der2 = 0.0;
        for i in 0..N {
            let sk = self.atol + self.rtol * y[i].abs();
            der2 += ((f1[i] - f0[i]) / sk).powi(2);
        }
        let der2 = der2.sqrt() / h;
        let der12 = der2.max(dnf.sqrt());
        let h1 = if der12 <= 1e-15 { (h * 1e-3).max(1e-6) } else { (0.01 / der12).powf(1.0 / 8.0) };
        (100.0 * h).min(h1).min(self.h_max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run<const N: usize>(solver: &Dop853, rhs: impl FnMut(f64, &[f64; N]) -> [f64; N], x0: f64, y0: [f64; N], x1: f64) -> [f64; N] {
        let mut stats = OdeStats::default();
        solver.integrate(rhs, x0, y0, x1, 0.0, |_, _| StepAction::Continue, &mut stats).unwrap()
    }

    #[test]
    fn harmonic_oscillator() {
        let solver = Dop853::default();
        let y = run(&solver, |_, y: &[f64; 2]| [y[1], -y[0]], 0.0, [0.0, 1.0], 20.0);
        assert!((y[0] - 20f64.sin()).abs() < 1e-9);
        assert!((y[1] - 20f64.cos()).abs() < 1e-9);
    }

    #[test]
    fn non_autonomous_stage_times() {
        // y' = cos(x) y has y = exp(sin x); wrong stage abscissae show up here.
        let solver = Dop853::default().with_rtol(1e-12).with_atol(1e-14);
        let y = run(&solver, |x, y: &[f64; 1]| [x.cos() * y[0]], 0.0, [1.0], 10.0);
        assert!((y[0] - 10f64.sin().exp()).abs() < 1e-10);
    }

    #[test]
    fn eighth_order_convergence() {
        // Fixed steps via h_max with a loose tolerance: error ratio ~ 2^8.
        let err_at = |h: f64| {
            let solver = Dop853 { rtol: 1.0, atol: 1.0, h_max: h, max_steps: 1_000_000 };
            let y = run(&solver, |x, y: &[f64; 1]| [x.cos() * y[0]], 0.0, [1.0], 4.0);
            (y[0] - 4f64.sin().exp()).abs()
        };
        let e1 = err_at(0.4);
        let e2 = err_at(0.2);
        let order = (e1 / e2).log2();
        assert!(order > 7.0, "observed order {order}");
    }

    #[test]
    fn rescaling_preserves_ratios() {
        let solver = Dop853::default();
        let mut stats = OdeStats::default();
        let y = solver
            .integrate(
                |_, y: &[f64; 2]| [y[1], y[0]],
                0.0,
                [1.0, 1.0],
                30.0,
                0.0,
                |_, y| {
                    if y[0].abs() > 1e6 {
                        StepAction::Rescale(1e-6)
                    } else {
                        StepAction::Continue
                    }
                },
                &mut stats,
            )
            .unwrap();
        assert!((y[1] / y[0] - 1.0).abs() < 1e-12);
        assert!(y[0] < 1e7);
    }
}
