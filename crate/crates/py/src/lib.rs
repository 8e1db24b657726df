//! Python bindings: configurations, weights, private and plaintext inference,
//! sharing primitives, the cost model and the architecture search.

use std::collections::HashMap;
use std::path::PathBuf;

use adapter_mpc::cost::{self, Arch, CostCoefficients, ProfileSample};
use adapter_mpc::nas::{self, ControllerConfig, ControllerMode, SearchOptions, SearchSpace, SearchTargets, TableEvaluator};
use adapter_mpc::nn::{self, io as weights_io, PipelineParams, RealTensor};
use adapter_mpc::ring::io::Dtype;
use adapter_mpc::ring::{FixedPointConfig, FixedTensor};
use adapter_mpc::runtime::{run_two_party, simulate_latency as simulate, CommMeter, NetworkEnv, TransportKind};
use adapter_mpc::sharing::{reconstruct_arith, share_arith, ArithShare, Session};
use adapter_mpc::Error;
use pyo3::exceptions::{PyIOError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

fn py_err(e: Error) -> PyErr {
    match e {
        Error::Io { .. } | Error::Format(_) => PyIOError::new_err(e.to_string()),
        e if e.is_protocol() => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

trait IntoPy<T> {
    fn py(self) -> PyResult<T>;
}

impl<T> IntoPy<T> for adapter_mpc::Result<T> {
    fn py(self) -> PyResult<T> {
        self.map_err(py_err)
    }
}

fn fixed_point(frac_bits: u32) -> PyResult<FixedPointConfig> {
    FixedPointConfig::new(frac_bits).py()
}

fn transport(name: &str) -> PyResult<TransportKind> {
    match name {
        "inprocess" => Ok(TransportKind::InProcess),
        "tcp" => Ok(TransportKind::TcpLoopback),
        _ => Err(PyValueError::new_err(format!("transport must be 'inprocess' or 'tcp', got {name:?}"))),
    }
}

fn network(env: &str) -> PyResult<NetworkEnv> {
    NetworkEnv::by_label(env).py()
}

fn arch(h: usize, r: usize, s: usize) -> PyResult<Arch> {
    let a = Arch::new(h, r, s);
    if a.is_valid() {
        Ok(a)
    } else {
        Err(PyValueError::new_err(format!("invalid configuration {a} (need h, r, s >= 1 and h | r)")))
    }
}

/// Adapter pipeline dimensions.
#[pyclass(name = "AdapterConfig", module = "adapter_mpc", from_py_object)]
#[derive(Clone)]
struct PyAdapterConfig {
    inner: nn::AdapterConfig,
}

#[pymethods]
impl PyAdapterConfig {
    #[new]
    #[pyo3(signature = (h=2, r=8, s=1, scaler=0.5, d_model=32, n_tokens=8, n_classes=10))]
    fn new(h: usize, r: usize, s: usize, scaler: f64, d_model: usize, n_tokens: usize, n_classes: usize) -> PyResult<Self> {
        let inner = nn::AdapterConfig { h, r, s, scaler, d_model, n_tokens, n_classes };
        inner.validate().py()?;
        Ok(PyAdapterConfig { inner })
    }

    #[getter]
    fn h(&self) -> usize {
        self.inner.h
    }

    #[getter]
    fn r(&self) -> usize {
        self.inner.r
    }

    #[getter]
    fn s(&self) -> usize {
        self.inner.s
    }

    #[getter]
    fn scaler(&self) -> f64 {
        self.inner.scaler
    }

    #[getter]
    fn d_model(&self) -> usize {
        self.inner.d_model
    }

    #[getter]
    fn n_tokens(&self) -> usize {
        self.inner.n_tokens
    }

    #[getter]
    fn n_classes(&self) -> usize {
        self.inner.n_classes
    }

    fn __repr__(&self) -> String {
        let c = &self.inner;
        format!(
            "AdapterConfig(h={}, r={}, s={}, scaler={}, d_model={}, n_tokens={}, n_classes={})",
            c.h, c.r, c.s, c.scaler, c.d_model, c.n_tokens, c.n_classes
        )
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

/// Fixed-point adapter weights held by the model service.
#[pyclass(name = "Weights", module = "adapter_mpc")]
struct PyWeights {
    config: nn::AdapterConfig,
    params: PipelineParams<FixedTensor>,
}

impl PyWeights {
    fn fixed_point(&self) -> FixedPointConfig {
        self.params.named()[0].1.config()
    }

    fn find(&self, name: &str) -> PyResult<&FixedTensor> {
        self.params
            .named()
            .into_iter()
            .find(|(n, _)| n == name)
            .map(|(_, t)| t)
            .ok_or_else(|| PyValueError::new_err(format!("no tensor named {name:?}")))
    }
}

#[pymethods]
impl PyWeights {
    /// Seeded random weights.
    #[staticmethod]
    #[pyo3(signature = (config, seed=0, frac_bits=16))]
    fn random(config: &PyAdapterConfig, seed: u64, frac_bits: u32) -> PyResult<Self> {
        let params = PipelineParams::random(&config.inner, fixed_point(frac_bits)?, seed).py()?;
        Ok(PyWeights { config: config.inner.clone(), params })
    }

    /// Reads a weights directory (`manifest.json` plus `weights.bin`).
    #[staticmethod]
    fn load(dir: PathBuf) -> PyResult<Self> {
        let (config, params) = weights_io::load_weights(&dir).py()?;
        Ok(PyWeights { config, params })
    }

    /// Writes a weights directory; `dtype` is "u64ring" (exact) or "f32".
    #[pyo3(signature = (dir, dtype="u64ring"))]
    fn save(&self, dir: PathBuf, dtype: &str) -> PyResult<()> {
        let dtype = match dtype {
            "u64ring" => Dtype::U64Ring,
            "f32" => Dtype::F32,
            _ => return Err(PyValueError::new_err(format!("dtype must be 'u64ring' or 'f32', got {dtype:?}"))),
        };
        weights_io::save_weights(&dir, &self.config, &self.params, dtype).py()
    }

    #[getter]
    fn config(&self) -> PyAdapterConfig {
        PyAdapterConfig { inner: self.config.clone() }
    }

    fn names(&self) -> Vec<String> {
        self.params.named().into_iter().map(|(n, _)| n).collect()
    }

    fn shape(&self, name: &str) -> PyResult<Vec<usize>> {
        Ok(self.find(name)?.shape().to_vec())
    }

    /// Decoded values of one tensor, row-major.
    fn values(&self, name: &str) -> PyResult<Vec<f64>> {
        Ok(self.find(name)?.to_f64())
    }
}

/// Outcome of a private inference: logits revealed to the model user and
/// the traffic of both parties.
#[pyclass(name = "InferenceResult", module = "adapter_mpc", get_all)]
struct PyInferenceResult {
    logits: Vec<f64>,
    argmax: usize,
    rounds: u64,
    bytes: u64,
    offline_bytes: u64,
    meter: CommMeterHandle,
}

struct CommMeterHandle(CommMeter);

impl<'py> IntoPyObject<'py> for &CommMeterHandle {
    type Target = PyDict;
    type Output = Bound<'py, PyDict>;
    type Error = PyErr;

    fn into_pyobject(self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let d = PyDict::new(py);
        for (k, c) in self.0.breakdown() {
            d.set_item(k, (c.rounds, c.bytes))?;
        }
        Ok(d)
    }
}

#[pymethods]
impl PyInferenceResult {
    /// Communication time of this run on "LAN" or "WAN", seconds.
    #[pyo3(signature = (env="WAN"))]
    fn simulated_comm_time(&self, env: &str) -> PyResult<f64> {
        Ok(simulate(&self.meter.0, &network(env)?))
    }

    fn __repr__(&self) -> String {
        format!("InferenceResult(argmax={}, rounds={}, bytes={})", self.argmax, self.rounds, self.bytes)
    }
}

fn features_tensor(cfg: &nn::AdapterConfig, rows: Vec<Vec<f64>>, fp: FixedPointConfig) -> PyResult<FixedTensor> {
    let [n, d] = cfg.input_shape();
    if rows.len() != n || rows.iter().any(|r| r.len() != d) {
        return Err(PyValueError::new_err(format!("features must be {n} rows of {d} values")));
    }
    FixedTensor::from_f64(&[n, d], &rows.concat(), fp).py()
}

/// Seeded standard-normal token features, `n_tokens` rows of `d_model`.
#[pyfunction]
#[pyo3(signature = (config, seed=0))]
fn random_features(config: &PyAdapterConfig, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let x = nn::random_features(&config.inner, FixedPointConfig::DEFAULT, seed).py()?;
    Ok(x.to_f64().chunks(config.inner.d_model).map(<[f64]>::to_vec).collect())
}

/// Runs both parties on `transport` ("inprocess" or "tcp" loopback).
#[pyfunction]
#[pyo3(signature = (weights, features, seed=0, transport="inprocess"))]
fn private_inference(
    py: Python<'_>,
    weights: &PyWeights,
    features: Vec<Vec<f64>>,
    seed: u64,
    transport: &str,
) -> PyResult<PyInferenceResult> {
    let kind = self::transport(transport)?;
    let x = features_tensor(&weights.config, features, weights.fixed_point())?;
    let run = py
        .detach(|| nn::run_private_inference(kind, &weights.config, seed, &x, &weights.params))
        .py()?;
    let logits = run.logits.to_f64();
    let meter = run.meter();
    Ok(PyInferenceResult {
        argmax: nn::argmax(&logits),
        logits,
        rounds: meter.rounds(),
        bytes: meter.bytes_sent(),
        offline_bytes: meter.offline_bytes(),
        meter: CommMeterHandle(meter),
    })
}

/// Double-precision reference logits for the same weights.
#[pyfunction]
fn plaintext_inference(weights: &PyWeights, features: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let x = features_tensor(&weights.config, features, weights.fixed_point())?;
    let real = nn::to_real(&weights.params);
    let out = nn::pipeline_forward_f64(&RealTensor::from_fixed(&x), &real, &weights.config).py()?;
    Ok(out.data().to_vec())
}

/// Additive shares of fixed-point encodings, as raw ring words.
#[pyfunction]
#[pyo3(signature = (values, seed=0, frac_bits=16))]
fn share(values: Vec<f64>, seed: u64, frac_bits: u32) -> PyResult<(Vec<u64>, Vec<u64>)> {
    let x = FixedTensor::from_f64(&[values.len()], &values, fixed_point(frac_bits)?).py()?;
    let (s0, s1) = share_arith(&x, &mut ChaCha20Rng::seed_from_u64(seed));
    Ok((s0.ring().data().to_vec(), s1.ring().data().to_vec()))
}

/// Inverse of [`share`].
#[pyfunction]
#[pyo3(signature = (share0, share1, frac_bits=16))]
fn reconstruct(share0: Vec<u64>, share1: Vec<u64>, frac_bits: u32) -> PyResult<Vec<f64>> {
    if share0.len() != share1.len() {
        return Err(PyValueError::new_err("shares differ in length"));
    }
    let fp = fixed_point(frac_bits)?;
    Ok(share0.iter().zip(&share1).map(|(a, b)| fp.decode(a.wrapping_add(*b))).collect())
}

type PrivateOp = fn(&ArithShare, &ArithShare, &mut Session<'_>) -> adapter_mpc::Result<ArithShare>;

/// Shares `x` and `y`, runs `op` between two parties and reconstructs.
fn two_party_op(x: Vec<f64>, y: Vec<f64>, seed: u64, op: PrivateOp) -> PyResult<(Vec<f64>, u64)> {
    let fp = FixedPointConfig::DEFAULT;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let (x0, x1) = share_arith(&FixedTensor::from_f64(&[x.len()], &x, fp).py()?, &mut rng);
    let (y0, y1) = share_arith(&FixedTensor::from_f64(&[y.len()], &y, fp).py()?, &mut rng);
    let run = run_two_party(
        TransportKind::InProcess,
        |ch| op(&x0, &y0, &mut Session::new(ch, seed, fp)),
        |ch| op(&x1, &y1, &mut Session::new(ch, seed, fp)),
    )
    .py()?;
    Ok((reconstruct_arith(&run.out0, &run.out1).py()?.to_f64(), run.meter0.rounds()))
}

/// Elementwise fixed-point product of two secret-shared vectors (one
/// Beaver round). Returns the revealed product and the rounds used.
#[pyfunction]
#[pyo3(signature = (x, y, seed=0))]
fn private_multiply(x: Vec<f64>, y: Vec<f64>, seed: u64) -> PyResult<(Vec<f64>, u64)> {
    if x.len() != y.len() {
        return Err(PyValueError::new_err("x and y differ in length"));
    }
    two_party_op(x, y, seed, |a, b, s| s.mul(a, b))
}

/// ReLU of a secret-shared vector. Returns the revealed result and the rounds used.
#[pyfunction]
#[pyo3(signature = (x, seed=0))]
fn private_relu(x: Vec<f64>, seed: u64) -> PyResult<(Vec<f64>, u64)> {
    let n = x.len();
    two_party_op(x, vec![0.0; n], seed, |a, _, s| nn::relu_private(a, s))
}

/// `rounds * 2 * latency + bytes * 8 / bandwidth` on "LAN" or "WAN".
#[pyfunction]
#[pyo3(signature = (rounds, bytes, env="WAN"))]
fn simulate_latency(rounds: u64, bytes: u64, env: &str) -> PyResult<f64> {
    Ok(simulate(&CommMeter::from_totals(rounds, bytes), &network(env)?))
}

#[pyfunction]
fn estimate_rounds(h: usize, r: usize, s: usize) -> PyResult<u64> {
    Ok(cost::estimate_rounds(arch(h, r, s)?))
}

#[pyfunction]
fn estimate_comm_gb(h: usize, r: usize, s: usize) -> PyResult<f64> {
    Ok(cost::estimate_comm_gb(arch(h, r, s)?))
}

fn coefficients(path: Option<PathBuf>) -> PyResult<CostCoefficients> {
    match path {
        Some(p) => cost::read_coefficients(&p).py(),
        None => Ok(CostCoefficients::published_wan()),
    }
}

/// `(comm, comp, total)` seconds from fitted coefficients (a JSON file
/// written by the CLI `fit`) or the published WAN set.
#[pyfunction]
#[pyo3(signature = (h, r, s, coefficients=None))]
fn estimate_latency(h: usize, r: usize, s: usize, coefficients: Option<PathBuf>) -> PyResult<(f64, f64, f64)> {
    let e = cost::estimate_latency(arch(h, r, s)?, &self::coefficients(coefficients)?);
    Ok((e.comm_s, e.comp_s, e.total_s))
}

/// Fits `(c1 h + c2 r + c3) s + c4` to `(h, r, s, comm_s, comp_s)` samples.
/// Returns a dict with `comm`, `comp`, `r2_comm`, `r2_comp`.
#[pyfunction]
#[pyo3(signature = (samples, env="WAN"))]
fn fit_cost_model<'py>(
    py: Python<'py>,
    samples: Vec<(usize, usize, usize, f64, f64)>,
    env: &str,
) -> PyResult<Bound<'py, PyDict>> {
    let samples: Vec<ProfileSample> = samples
        .into_iter()
        .map(|(h, r, s, comm_time_s, comp_time_s)| ProfileSample {
            h,
            r,
            s,
            comm_time_s,
            comp_time_s,
            rounds: 0,
            bytes: 0,
        })
        .collect();
    let c = cost::fit_cost_model(&samples, env).py()?;
    let d = PyDict::new(py);
    d.set_item("env", &c.env)?;
    d.set_item("comm", c.comm.0.to_vec())?;
    d.set_item("comp", c.comp.0.to_vec())?;
    d.set_item("r2_comm", c.r2_comm)?;
    d.set_item("r2_comp", c.r2_comp)?;
    Ok(d)
}

fn table_space(utilities: &HashMap<(usize, usize, usize), f64>) -> PyResult<(TableEvaluator, SearchSpace)> {
    let table = TableEvaluator::new(utilities.iter().map(|(&(h, r, s), &u)| (Arch::new(h, r, s), u))).py()?;
    let sorted = |f: fn(&Arch) -> usize| {
        let mut v: Vec<usize> = table.configs().map(|a| f(&a)).collect();
        v.sort_unstable();
        v.dedup();
        v
    };
    let max_s = sorted(|a| a.s).last().copied().unwrap_or(0);
    let space = SearchSpace::new(sorted(|a| a.h), sorted(|a| a.r), max_s).py()?;
    Ok((table, space))
}

fn found_dict<'py>(py: Python<'py>, f: Option<nas::Found>) -> PyResult<Option<Bound<'py, PyDict>>> {
    f.map(|f| {
        let d = PyDict::new(py);
        d.set_item("h", f.arch.h)?;
        d.set_item("r", f.arch.r)?;
        d.set_item("s", f.arch.s)?;
        d.set_item("utility", f.utility)?;
        d.set_item("latency_s", f.latency_s)?;
        Ok(d)
    })
    .transpose()
}

/// Latency-constrained search over the configurations keyed in `utilities`
/// (`{(h, r, s): utility}`). `mode` is "exhaustive" or "reinforce". Returns
/// `(best or None, met_target, samples)`.
#[pyfunction]
#[pyo3(signature = (utilities, utility, latency, patience=100, mode="exhaustive", seed=0, max_samples=10_000, lr=0.1, coefficients=None))]
#[allow(clippy::too_many_arguments)]
fn search<'py>(
    py: Python<'py>,
    utilities: HashMap<(usize, usize, usize), f64>,
    utility: f64,
    latency: f64,
    patience: usize,
    mode: &str,
    seed: u64,
    max_samples: usize,
    lr: f64,
    coefficients: Option<PathBuf>,
) -> PyResult<(Option<Bound<'py, PyDict>>, bool, usize)> {
    let mode = match mode {
        "exhaustive" => ControllerMode::Exhaustive,
        "reinforce" => ControllerMode::Reinforce,
        _ => return Err(PyValueError::new_err(format!("mode must be 'exhaustive' or 'reinforce', got {mode:?}"))),
    };
    let (mut table, space) = table_space(&utilities)?;
    let targets = SearchTargets { utility, latency_s: latency, patience };
    let opts = SearchOptions { controller: ControllerConfig { mode, lr, ..Default::default() }, max_samples };
    let c = self::coefficients(coefficients)?;
    let out = nas::nas_search(&targets, &c, &space, &mut table, &opts, seed).py()?;
    Ok((found_dict(py, out.best)?, out.met_target, out.samples))
}

/// Exhaustive oracle over the same inputs as [`search`].
#[pyfunction]
#[pyo3(signature = (utilities, utility, latency, coefficients=None))]
fn brute_force_search<'py>(
    py: Python<'py>,
    utilities: HashMap<(usize, usize, usize), f64>,
    utility: f64,
    latency: f64,
    coefficients: Option<PathBuf>,
) -> PyResult<Option<Bound<'py, PyDict>>> {
    let (mut table, space) = table_space(&utilities)?;
    let targets = SearchTargets { utility, latency_s: latency, patience: 1 };
    let c = self::coefficients(coefficients)?;
    found_dict(py, nas::brute_force_search(&targets, &c, &space, &mut table).py()?)
}

#[pymodule]
#[pyo3(name = "adapter_mpc")]
fn adapter_mpc_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyAdapterConfig>()?;
    m.add_class::<PyWeights>()?;
    m.add_class::<PyInferenceResult>()?;
    m.add_function(wrap_pyfunction!(random_features, m)?)?;
    m.add_function(wrap_pyfunction!(private_inference, m)?)?;
    m.add_function(wrap_pyfunction!(plaintext_inference, m)?)?;
    m.add_function(wrap_pyfunction!(share, m)?)?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(private_multiply, m)?)?;
    m.add_function(wrap_pyfunction!(private_relu, m)?)?;
    m.add_function(wrap_pyfunction!(simulate_latency, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_rounds, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_comm_gb, m)?)?;
    m.add_function(wrap_pyfunction!(estimate_latency, m)?)?;
    m.add_function(wrap_pyfunction!(fit_cost_model, m)?)?;
    m.add_function(wrap_pyfunction!(search, m)?)?;
    m.add_function(wrap_pyfunction!(brute_force_search, m)?)?;
    Ok(())
}
