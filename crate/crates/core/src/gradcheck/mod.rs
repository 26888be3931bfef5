//! Central finite-difference verification of analytic gradients.

pub mod targets;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::{GradSlot, Scalar};

/// One evaluation of the objective.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    /// Contributions whose sum is the objective. Differences between two
    /// evaluations are formed term by term, so terms untouched by a probe
    /// cancel exactly instead of adding summation roundoff.
    pub terms: Vec<f64>,
    /// Fingerprint of every piecewise-linear branch taken (ReLU and sign
    /// masks); 0 for smooth objectives.
    pub signature: u64,
}

impl Evaluation {
    pub fn scalar(value: f64) -> Self {
        Evaluation {
            terms: vec![value],
            signature: 0,
        }
    }

    pub fn value(&self) -> f64 {
        self.terms.iter().sum()
    }
}

/// A scalar-valued computation over a fixed set of parameter slots.
pub trait GradTarget<T: Scalar> {
    fn slot_count(&self) -> usize;

    fn slot_name(&self, index: usize) -> String;

    fn slot_mut(&mut self, index: usize) -> &mut GradSlot<T>;

    /// Forward-only evaluation of the objective.
    fn evaluate(&self) -> Result<Evaluation>;

    /// Evaluates the objective and leaves its gradient in every slot's `grad`,
    /// overwriting whatever was accumulated before.
    fn evaluate_with_grad(&mut self) -> Result<f64>;
}

/// FNV-1a fingerprint of the sign pattern of `values`.
pub fn sign_signature<T: Scalar>(mut hash: u64, values: &[T]) -> u64 {
    for chunk in values.chunks(64) {
        let mut bits = 0u64;
        for (i, v) in chunk.iter().enumerate() {
            if *v > T::zero() {
                bits |= 1 << i;
            }
        }
        for byte in bits.to_le_bytes() {
            hash ^= byte as u64;
            hash = hash.wrapping_mul(0x100_0000_01b3);
        }
    }
    hash
}

pub const SIGNATURE_SEED: u64 = 0xcbf2_9ce4_8422_2325;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    pub eps: f64,
    /// Upper bound on the number of scalar parameters probed.
    pub max_samples: usize,
    pub seed: u64,
    /// Skip probes whose ±eps evaluations take different piecewise-linear
    /// branches; the objective is not differentiable across such a probe.
    pub skip_kinks: bool,
}

/// Floating-point width a check runs in, with its step and pass threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Precision {
    /// 64-bit verification build of the kernels.
    Wide,
    /// The 32-bit kernels used for training and inference.
    Standard,
}

impl Precision {
    pub fn eps(self) -> f64 {
        match self {
            Precision::Wide => 1e-3,
            Precision::Standard => 1e-2,
        }
    }

    pub fn threshold(self) -> f64 {
        match self {
            Precision::Wide => 1e-6,
            Precision::Standard => 1e-2,
        }
    }

    pub fn config(self, seed: u64) -> GradCheckConfig {
        GradCheckConfig::new(self.eps()).with_seed(seed)
    }
}

impl std::str::FromStr for Precision {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wide" | "f64" => Ok(Precision::Wide),
            "standard" | "f32" => Ok(Precision::Standard),
            other => Err(Error::config(format!(
                "unknown precision '{other}' (expected wide or standard)"
            ))),
        }
    }
}

impl std::fmt::Display for Precision {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Precision::Wide => "wide",
            Precision::Standard => "standard",
        })
    }
}

impl GradCheckConfig {
    pub fn new(eps: f64) -> Self {
        GradCheckConfig {
            eps,
            max_samples: 256,
            seed: 0,
            skip_kinks: true,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_samples(mut self, max_samples: usize) -> Self {
        self.max_samples = max_samples;
        self
    }

    pub fn with_kink_skipping(mut self, skip: bool) -> Self {
        self.skip_kinks = skip;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Slot name and element index of the worst probe.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares analytic gradients against central differences on a bounded
/// random subset of parameters and returns the largest relative error.
pub fn finite_diff_gradcheck<T: Scalar, G: GradTarget<T>>(
    target: &mut G,
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    let analytic = analytic_gradients(target)?;
    probe(target, &analytic, config)
}

/// Checks the gradients of `analytic` against central differences of
/// `reference`, the same computation with the same parameter values in a
/// wider type.
///
/// In f32 the objective's own rounding noise (about 1e-5 absolute at
/// eps = 1e-2 on a small network) swamps weak gradients, so the 32-bit
/// kernels are scored against an f64 evaluation of the identical instance.
pub fn cross_precision_gradcheck<A, R, GA, GR>(
    analytic: &mut GA,
    reference: &mut GR,
    config: &GradCheckConfig,
) -> Result<GradCheckReport>
where
    A: Scalar,
    R: Scalar,
    GA: GradTarget<A>,
    GR: GradTarget<R>,
{
    let grads = analytic_gradients(analytic)?;
    if analytic.slot_count() != reference.slot_count() {
        return Err(Error::config("reference has a different number of parameters"));
    }
    for i in 0..analytic.slot_count() {
        let name = analytic.slot_name(i);
        let a = analytic.slot_mut(i).value.cast::<f64>();
        let r = reference.slot_mut(i).value.cast::<f64>();
        if name != reference.slot_name(i) || a != r {
            return Err(Error::config(format!("reference does not mirror parameter {name}")));
        }
    }
    probe(reference, &grads, config)
}

fn analytic_gradients<T: Scalar, G: GradTarget<T>>(target: &mut G) -> Result<Vec<Vec<f64>>> {
    let base = target.evaluate_with_grad()?;
    if !base.is_finite() {
        let culprit = (0..target.slot_count()).find_map(|i| {
            let elem = target.slot_mut(i).value.data().iter().position(|v| !v.is_finite())?;
            Some(format!("{}[{elem}]", target.slot_name(i)))
        });
        return Err(Error::numerical(
            culprit.unwrap_or_else(|| "objective".into()),
            format!("non-finite loss {base}"),
        ));
    }
    (0..target.slot_count())
        .map(|i| {
            let grads: Vec<f64> = target
                .slot_mut(i)
                .grad
                .data()
                .iter()
                .map(|g| g.to_f64().unwrap())
                .collect();
            match grads.iter().position(|g| !g.is_finite()) {
                Some(elem) => Err(Error::numerical(
                    format!("{}[{elem}]", target.slot_name(i)),
                    format!("non-finite analytic gradient {}", grads[elem]),
                )),
                None => Ok(grads),
            }
        })
        .collect()
}

fn probe<T: Scalar, G: GradTarget<T>>(
    target: &mut G,
    analytic: &[Vec<f64>],
    config: &GradCheckConfig,
) -> Result<GradCheckReport> {
    if !(config.eps > 0.0) {
        return Err(Error::config(format!("gradcheck eps must be > 0, got {}", config.eps)));
    }
    let sizes: Vec<usize> = analytic.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut picks: Vec<usize> = if total <= config.max_samples {
        (0..total).collect()
    } else {
        sample(&mut rng, total, config.max_samples).into_vec()
    };
    picks.sort_unstable();

    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        checked: 0,
        skipped_kinks: 0,
    };
    let eps = T::from(config.eps).unwrap();
    for flat in picks {
        let (slot, elem) = locate(&sizes, flat);
        let name = target.slot_name(slot);
        let analytic = analytic[slot][elem];
        let original = target.slot_mut(slot).value.data()[elem];
        // the probe step is measured in the parameter's own precision
        let plus_value = original + eps;
        let minus_value = original - eps;
        let h_plus = (plus_value - original).to_f64().unwrap();
        let h_minus = (original - minus_value).to_f64().unwrap();

        target.slot_mut(slot).value.data_mut()[elem] = plus_value;
        let plus = target.evaluate();
        target.slot_mut(slot).value.data_mut()[elem] = minus_value;
        let minus = target.evaluate();
        target.slot_mut(slot).value.data_mut()[elem] = original;
        let (plus, minus) = (plus?, minus?);
        if !plus.value().is_finite() || !minus.value().is_finite() {
            return Err(Error::numerical(
                format!("{name}[{elem}]"),
                format!(
                    "non-finite perturbed loss ({}, {})",
                    plus.value(),
                    minus.value()
                ),
            ));
        }
        if config.skip_kinks && plus.signature != minus.signature {
            report.skipped_kinks += 1;
            continue;
        }
        if plus.terms.len() != minus.terms.len() {
            return Err(Error::numerical(name, "objective changed its number of terms"));
        }
        let delta: f64 = plus.terms.iter().zip(&minus.terms).map(|(a, b)| a - b).sum();
        let numeric = delta / (h_plus + h_minus);
        let err = relative_error(analytic, numeric);
        report.checked += 1;
        if report.worst.is_none() || err > report.max_rel_error {
            report.max_rel_error = err;
            report.worst = Some((name, elem));
        }
    }
    Ok(report)
}

fn locate(sizes: &[usize], mut flat: usize) -> (usize, usize) {
    for (i, &len) in sizes.iter().enumerate() {
        if flat < len {
            return (i, flat);
        }
        flat -= len;
    }
    unreachable!("flat index beyond parameter count")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::{Shape, Tensor};

    /// f(x) = Σ 3x
    struct Linear {
        x: GradSlot<f64>,
    }

    impl GradTarget<f64> for Linear {
        fn slot_count(&self) -> usize {
            1
        }
        fn slot_name(&self, _: usize) -> String {
            "x".into()
        }
        fn slot_mut(&mut self, _: usize) -> &mut GradSlot<f64> {
            &mut self.x
        }
        fn evaluate(&self) -> Result<Evaluation> {
            Ok(Evaluation::scalar(self.x.value.data().iter().map(|v| 3.0 * v).sum()))
        }
        fn evaluate_with_grad(&mut self) -> Result<f64> {
            self.x.grad.fill(3.0);
            Ok(self.evaluate()?.value())
        }
    }

    #[test]
    fn linear_function_has_exact_gradient() {
        let x = Tensor::from_vec(Shape::new(1, 1, 2, 3), vec![0.1, -2.0, 5.0, 0.0, 1.0, 3.0]).unwrap();
        let mut f = Linear { x: GradSlot::new(x) };
        let report = finite_diff_gradcheck(&mut f, &GradCheckConfig::new(1e-3)).unwrap();
        assert_eq!(report.checked, 6);
        assert!(report.max_rel_error < 1e-6, "{report:?}");
    }

    #[test]
    fn detects_wrong_gradient() {
        struct Wrong(GradSlot<f64>);
        impl GradTarget<f64> for Wrong {
            fn slot_count(&self) -> usize {
                1
            }
            fn slot_name(&self, _: usize) -> String {
                "w".into()
            }
            fn slot_mut(&mut self, _: usize) -> &mut GradSlot<f64> {
                &mut self.0
            }
            fn evaluate(&self) -> Result<Evaluation> {
                Ok(Evaluation::scalar(self.0.value.data().iter().map(|v| v * v).sum()))
            }
            fn evaluate_with_grad(&mut self) -> Result<f64> {
                let g = self.0.value.map(|v| v);
                self.0.grad = g;
                Ok(self.evaluate()?.value())
            }
        }
        let mut f = Wrong(GradSlot::new(Tensor::full(Shape::new(1, 1, 1, 4), 2.0).unwrap()));
        let report = finite_diff_gradcheck(&mut f, &GradCheckConfig::new(1e-5)).unwrap();
        assert!((report.max_rel_error - 0.5).abs() < 1e-6);
        assert_eq!(report.worst.unwrap().0, "w");
    }

    #[test]
    fn non_finite_values_name_the_parameter() {
        struct Blowup(GradSlot<f64>);
        impl GradTarget<f64> for Blowup {
            fn slot_count(&self) -> usize {
                1
            }
            fn slot_name(&self, _: usize) -> String {
                "blowup.weight".into()
            }
            fn slot_mut(&mut self, _: usize) -> &mut GradSlot<f64> {
                &mut self.0
            }
            fn evaluate(&self) -> Result<Evaluation> {
                Ok(Evaluation::scalar(self.0.get().ln()))
            }
            fn evaluate_with_grad(&mut self) -> Result<f64> {
                self.0.grad.fill(1.0 / self.0.get());
                Ok(self.evaluate()?.value())
            }
        }
        let mut f = Blowup(GradSlot::scalar(0.5));
        let err = finite_diff_gradcheck(&mut f, &GradCheckConfig::new(1.0)).unwrap_err();
        assert!(err.to_string().contains("blowup.weight"), "{err}");
        assert!(finite_diff_gradcheck(&mut f, &GradCheckConfig::new(0.0)).is_err());
    }

    #[test]
    fn kink_straddling_probes_are_skipped() {
        // |x| probed at 0 with a sign signature: the probe straddles the kink
        struct Abs(GradSlot<f64>);
        impl GradTarget<f64> for Abs {
            fn slot_count(&self) -> usize {
                1
            }
            fn slot_name(&self, _: usize) -> String {
                "x".into()
            }
            fn slot_mut(&mut self, _: usize) -> &mut GradSlot<f64> {
                &mut self.0
            }
            fn evaluate(&self) -> Result<Evaluation> {
                let v = self.0.value.data();
                Ok(Evaluation {
                    terms: v.iter().map(|x| x.abs()).collect(),
                    signature: sign_signature(SIGNATURE_SEED, v),
                })
            }
            fn evaluate_with_grad(&mut self) -> Result<f64> {
                self.0.grad = self.0.value.map(|x| if x > 0.0 { 1.0 } else { -1.0 });
                Ok(self.evaluate()?.value())
            }
        }
        let x = Tensor::from_vec(Shape::new(1, 1, 1, 3), vec![0.0, 1.0, -2.0]).unwrap();
        let mut f = Abs(GradSlot::new(x));
        let report = finite_diff_gradcheck(&mut f, &GradCheckConfig::new(1e-3)).unwrap();
        assert_eq!((report.checked, report.skipped_kinks), (2, 1));
        assert!(report.max_rel_error < 1e-9);
        let strict = GradCheckConfig::new(1e-3).with_kink_skipping(false);
        assert!(finite_diff_gradcheck(&mut f, &strict).unwrap().max_rel_error >= 1.0);
    }

    #[test]
    fn samples_are_bounded() {
        let x = Tensor::full(Shape::new(1, 1, 30, 30), 1.0).unwrap();
        let mut f = Linear { x: GradSlot::new(x) };
        let report =
            finite_diff_gradcheck(&mut f, &GradCheckConfig::new(1e-3).with_samples(50)).unwrap();
        assert_eq!(report.checked, 50);
    }
}
