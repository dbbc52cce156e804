//! Finite-difference gradient suite covering every differentiable op and a
//! small end-to-end network, in both `f32` and `f64`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::error::Result;
use crate::model::{net, Arch, ModelParams, ParamVars, TemporalKernel};
use crate::tensor::{grad_check_against, Graph, OpKind, Real, Shape, Tensor, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    F32,
    F64,
}

impl Precision {
    pub fn name(self) -> &'static str {
        match self {
            Precision::F32 => "f32",
            Precision::F64 => "f64",
        }
    }

    /// Finite-difference step and pass threshold.
    pub fn eps_and_tolerance(self) -> (f64, f64) {
        match self {
            Precision::F32 => (1e-2, 1e-2),
            Precision::F64 => (1e-2, 1e-6),
        }
    }
}

/// Name of the end-to-end entry in the suite.
pub const PIPELINE: &str = "pipeline";

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SuiteEntry {
    pub op: String,
    pub precision: Precision,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub checked: usize,
    pub skipped_at_kinks: usize,
    pub passed: bool,
    /// `(input index, element index)` of the worst element.
    pub worst: (usize, usize),
}

/// Uniform values with magnitude in `[lo, hi)` and random sign.
fn signed(shape: Shape, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let data = (0..shape.numel())
        .map(|_| {
            let m = rng.random_range(lo..hi) as f32;
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("finite")
}

/// Distinct values on a grid with spacing 0.125, shuffled.
fn well_separated(shape: Shape, rng: &mut ChaCha8Rng) -> Tensor<f32> {
    let n = shape.numel();
    let mut vals: Vec<f32> = (0..n)
        .map(|i| (i as f32 - (n / 2) as f32) * 0.125)
        .collect();
    for i in (1..n).rev() {
        vals.swap(i, rng.random_range(0..=i));
    }
    Tensor::from_vec(shape, vals).expect("finite")
}

/// The tiny network used for the end-to-end check: 3 frames, 8x8.
pub fn toy_arch() -> Arch {
    Arch {
        n_frames: 3,
        image_channels: 1,
        feature_channels: 2,
        out_channels: 1,
        encoder_width: 4,
        bottleneck_width: 4,
        decoder_width: 4,
        head_widths: [4, 4],
    }
}

/// What a check differentiates: `Some(op)` for a single op, `None` for the
/// whole network.
type Subject = Option<OpKind>;

/// Inputs to differentiate plus fixed tensors, all `f32`-representable so
/// both precisions see exactly the same point.
struct Case {
    subject: Subject,
    inputs: Vec<Tensor<f32>>,
    consts: Vec<Tensor<f32>>,
}

fn make_case(subject: Subject, seed: u64) -> Result<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ subject.map_or(0x5EED, |k| k as u64));
    let r = &mut rng;
    let (inputs, consts) = match subject {
        Some(OpKind::Conv2d) => (
            vec![
                signed(Shape::new(2, 4, 5, 5), 0.0, 1.0, r),
                signed(Shape::new(6, 2, 3, 3), 0.0, 1.0, r),
            ],
            vec![signed(Shape::new(2, 6, 3, 3), 0.0, 1.0, r)],
        ),
        Some(OpKind::Relu) => (
            vec![signed(Shape::new(1, 2, 4, 4), 0.2, 1.0, r)],
            vec![signed(Shape::new(1, 2, 4, 4), 0.0, 1.0, r)],
        ),
        Some(OpKind::MaxPool2) => (
            vec![well_separated(Shape::new(1, 2, 4, 6), r)],
            vec![signed(Shape::new(1, 2, 2, 3), 0.0, 1.0, r)],
        ),
        Some(OpKind::Upsample2) => (
            vec![signed(Shape::new(1, 2, 3, 2), 0.0, 1.0, r)],
            vec![signed(Shape::new(1, 2, 6, 4), 0.0, 1.0, r)],
        ),
        Some(OpKind::Concat) => (
            vec![
                signed(Shape::new(2, 1, 3, 3), 0.0, 1.0, r),
                signed(Shape::new(2, 2, 3, 3), 0.0, 1.0, r),
            ],
            vec![signed(Shape::new(2, 3, 3, 3), 0.0, 1.0, r)],
        ),
        Some(OpKind::Slice) => (
            vec![signed(Shape::new(2, 4, 3, 3), 0.0, 1.0, r)],
            vec![signed(Shape::new(2, 2, 3, 3), 0.0, 1.0, r)],
        ),
        Some(OpKind::Scale) => (
            vec![signed(Shape::new(1, 3, 3, 3), 0.0, 1.0, r)],
            vec![signed(Shape::new(1, 3, 3, 3), 0.0, 1.0, r)],
        ),
        Some(OpKind::Mse) => (
            vec![
                signed(Shape::new(1, 2, 3, 3), 0.0, 1.0, r),
                signed(Shape::new(1, 2, 3, 3), 0.0, 1.0, r),
            ],
            vec![],
        ),
        None => {
            let arch = toy_arch();
            let params = ModelParams::<f32>::init(&arch, seed)?;
            let window = signed(Shape::new(1, arch.n_frames, 8, 8), 0.0, 1.0, r);
            let target = signed(Shape::new(1, 1, 8, 8), 0.0, 1.0, r);
            (params.weights().to_vec(), vec![window, target])
        }
    };
    Ok(Case {
        subject,
        inputs,
        consts,
    })
}

/// Loss graph of `case` in element type `T`.
fn builder<T: Real>(case: &Case) -> impl Fn(&mut Graph<T>, &[Var]) -> Result<Var> {
    let subject = case.subject;
    let consts: Vec<Tensor<T>> = case.consts.iter().map(Tensor::cast).collect();
    move |g: &mut Graph<T>, v: &[Var]| {
        let c = consts
            .iter()
            .map(|t| g.leaf(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let y = match subject {
            Some(OpKind::Conv2d) => g.conv2d(v[0], v[1], 2, 1, 2)?,
            Some(OpKind::Relu) => g.relu(v[0]),
            Some(OpKind::MaxPool2) => g.maxpool2(v[0])?,
            Some(OpKind::Upsample2) => g.upsample2(v[0]),
            Some(OpKind::Concat) => g.concat_channels(v[0], v[1])?,
            Some(OpKind::Slice) => g.slice_channels(v[0], 1, 2)?,
            Some(OpKind::Scale) => g.scale(v[0], T::from_f64(2.0 / 3.0))?,
            Some(OpKind::Mse) => return g.mse(v[0], v[1]),
            None => {
                let arch = toy_arch();
                let pv = ParamVars::bind(&arch, v.to_vec())?;
                let kernel = TemporalKernel::new(arch.n_frames)?;
                let y = net::forward(g, &pv, c[0], Some(&kernel))?;
                return g.mse(y, c[1]);
            }
        };
        g.mse(y, c[0])
    }
}

fn with_fault<T: Real>(
    build: impl Fn(&mut Graph<T>, &[Var]) -> Result<Var>,
    fault: Option<OpKind>,
) -> impl Fn(&mut Graph<T>, &[Var]) -> Result<Var> {
    move |g: &mut Graph<T>, v: &[Var]| {
        if let Some(k) = fault {
            g.inject_fault(k);
        }
        build(g, v)
    }
}

fn run(case: &Case, precision: Precision, fault: Option<OpKind>) -> Result<SuiteEntry> {
    let (eps, tolerance) = precision.eps_and_tolerance();
    let reference = builder::<f64>(case);
    let r = match precision {
        Precision::F32 => {
            let analytic = with_fault(builder::<f32>(case), fault);
            grad_check_against(&analytic, &reference, &case.inputs, eps)?
        }
        Precision::F64 => {
            let analytic = with_fault(builder::<f64>(case), fault);
            let inputs: Vec<Tensor<f64>> = case.inputs.iter().map(Tensor::cast).collect();
            grad_check_against(&analytic, &reference, &inputs, eps)?
        }
    };
    Ok(SuiteEntry {
        op: case.subject.map_or(PIPELINE, OpKind::name).to_string(),
        precision,
        max_rel_error: r.max_rel_error,
        tolerance,
        checked: r.checked,
        skipped_at_kinks: r.skipped_at_kinks,
        passed: r.max_rel_error < tolerance && r.checked > 0,
        worst: r.worst,
    })
}

/// Runs every check in `f32` then `f64`. `fault` corrupts one op's
/// backward pass to demonstrate that the suite notices.
///
/// Finite differences are always taken on the `f64` build of the graph at
/// the same point; the `f32` entries therefore measure the `f32` backward
/// pass rather than `f32` forward rounding.
pub fn gradient_suite(seed: u64, fault: Option<OpKind>) -> Result<Vec<SuiteEntry>> {
    let subjects: Vec<Subject> = OpKind::ALL.into_iter().map(Some).chain([None]).collect();
    let cases = subjects
        .into_iter()
        .map(|s| make_case(s, seed))
        .collect::<Result<Vec<_>>>()?;
    let mut out = Vec::new();
    for precision in [Precision::F32, Precision::F64] {
        for case in &cases {
            out.push(run(case, precision, fault)?);
        }
    }
    Ok(out)
}
