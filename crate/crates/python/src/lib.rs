use fockspec::spectrum::{self, OperatorKind};
use fockspec::weinberg::{self, WeinbergOperator};
use fockspec::{example_family, Error, ExampleParams, FriedrichsFamily, GridMode, PSweep, TorusGrid};
use pyo3::create_exception;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

create_exception!(pyfockspec, FockspecError, PyRuntimeError);

fn err(e: Error) -> PyErr {
    match e {
        Error::Config { .. } | Error::InvalidArgument(_) | Error::UnsupportedMode(_) => PyValueError::new_err(e.to_string()),
        other => FockspecError::new_err(other.to_string()),
    }
}

fn mode(s: &str) -> PyResult<GridMode> {
    GridMode::parse(s).map_err(err)
}

/// Parameters of the example family.
#[pyclass(name = "Params", module = "pyfockspec", from_py_object)]
#[derive(Clone)]
struct PyParams {
    inner: ExampleParams,
}

#[pymethods]
impl PyParams {
    #[new]
    #[pyo3(signature = (mu1=1e-3, mu2=1e-3, c=(1.0, 1.0, 1.0), d=(1.0, 1.0, 1.0), w0=1.0, v0_amplitude=0.0))]
    fn new(mu1: f64, mu2: f64, c: (f64, f64, f64), d: (f64, f64, f64), w0: f64, v0_amplitude: f64) -> PyResult<Self> {
        let inner = ExampleParams {
            mu1,
            mu2,
            c: [c.0, c.1, c.2],
            d: [d.0, d.1, d.2],
            w0,
            v0_amplitude,
        };
        inner.validate().map_err(err)?;
        Ok(Self { inner })
    }

    #[getter]
    fn mu1(&self) -> f64 {
        self.inner.mu1
    }

    #[getter]
    fn mu2(&self) -> f64 {
        self.inner.mu2
    }

    #[getter]
    fn w0(&self) -> f64 {
        self.inner.w0
    }

    /// Copy with the coupling of channel `alpha` replaced.
    fn with_mu(&self, alpha: usize, mu: f64) -> Self {
        Self {
            inner: self.inner.with_mu(alpha, mu),
        }
    }

    /// `[(mu0, mu1), (mu0, mu1)]` for both channels, Richardson-refined.
    #[pyo3(signature = (n=16, mode="base"))]
    fn thresholds(&self, n: usize, mode: &str) -> PyResult<Vec<(f64, f64)>> {
        let g = TorusGrid::new(n, self::mode(mode)?, true).map_err(err)?;
        (1..=2)
            .map(|a| {
                fockspec::model::mu_thresholds(&self.inner, a, &g)
                    .map(|t| (t.mu0, t.mu1))
                    .map_err(err)
            })
            .collect()
    }

    fn __repr__(&self) -> String {
        let p = &self.inner;
        format!(
            "Params(mu1={}, mu2={}, c={:?}, d={:?}, w0={}, v0_amplitude={})",
            p.mu1, p.mu2, p.c, p.d, p.w0, p.v0_amplitude
        )
    }
}

/// Uniform grid on the torus (`mode` is "base" or "double").
#[pyclass(name = "Grid", module = "pyfockspec", from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: TorusGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    #[pyo3(signature = (n, mode="base", offset=true))]
    fn new(n: usize, mode: &str, offset: bool) -> PyResult<Self> {
        Ok(Self {
            inner: TorusGrid::new(n, self::mode(mode)?, offset).map_err(err)?,
        })
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.inner.weight()
    }

    fn nodes(&self) -> Vec<(f64, f64, f64)> {
        self.inner.nodes().iter().map(|p| (p[0], p[1], p[2])).collect()
    }

    fn integrate(&self, samples: Vec<f64>) -> PyResult<f64> {
        self.inner.integrate(&samples).map_err(err)
    }
}

/// Fredholm determinants and branches of the fibre operators.
#[pyclass(name = "Family", module = "pyfockspec")]
struct PyFamily {
    inner: FriedrichsFamily,
    params: ExampleParams,
}

#[pymethods]
impl PyFamily {
    #[new]
    #[pyo3(signature = (params, grid, refined=true))]
    fn new(params: &PyParams, grid: &PyGrid, refined: bool) -> PyResult<Self> {
        let model = example_family(&params.inner).map_err(err)?;
        let inner = if refined {
            FriedrichsFamily::refined(&model, &grid.inner)
        } else {
            FriedrichsFamily::plain(&model, &grid.inner)
        }
        .map_err(err)?;
        Ok(Self {
            inner,
            params: params.inner.clone(),
        })
    }

    #[getter]
    fn m(&self) -> f64 {
        self.inner.m()
    }

    #[getter]
    fn big_m(&self) -> f64 {
        self.inner.big_m()
    }

    #[getter]
    fn params(&self) -> PyParams {
        PyParams {
            inner: self.params.clone(),
        }
    }

    fn delta(&self, alpha: usize, p: [f64; 3], z: f64) -> PyResult<f64> {
        self.inner.delta_value(alpha, &p, z).map_err(err)
    }

    /// Eigenvalues of the fibre operator outside its band, as `(alpha, z)`.
    fn roots(&self, p: [f64; 3]) -> PyResult<Vec<(usize, f64)>> {
        let scan = self.inner.roots_full_scan(&p).map_err(err)?;
        Ok(scan.roots().iter().map(|r| (r.alpha, r.z)).collect())
    }

    /// `(regime, min, max)` of `Delta_alpha(.; m)` over a sweep.
    #[pyo3(signature = (alpha, sweep_n=9))]
    fn classify(&self, py: Python<'_>, alpha: usize, sweep_n: usize) -> PyResult<(String, f64, f64)> {
        let sweep = PSweep::new(sweep_n).map_err(err)?;
        let rc = py.detach(|| self.inner.classify_regime(alpha, &sweep)).map_err(err)?;
        Ok((rc.regime.to_string(), rc.min_value, rc.max_value))
    }

    /// Essential spectrum and the set where the Weinberg operator is built.
    #[pyo3(signature = (sweep_n=9))]
    fn essential_spectrum<'py>(&self, py: Python<'py>, sweep_n: usize) -> PyResult<Bound<'py, PyDict>> {
        let sweep = PSweep::new(sweep_n).map_err(err)?;
        let (ess, _) = py.detach(|| spectrum::essential_spectrum_with(&self.inner, &sweep)).map_err(err)?;
        let sigma = spectrum::sigma_region(&ess);
        let d = PyDict::new(py);
        d.set_item("m", ess.m)?;
        d.set_item("big_m", ess.big_m)?;
        d.set_item("intervals", ess.intervals.iter().map(|iv| (iv[0], iv[1])).collect::<Vec<_>>())?;
        d.set_item("tau_ess", ess.tau_ess)?;
        d.set_item("regimes", ess.regimes.iter().map(|r| r.regime.to_string()).collect::<Vec<_>>())?;
        d.set_item("sigma", sigma.intervals.iter().map(|iv| (iv[0], iv[1])).collect::<Vec<_>>())?;
        d.set_item("sigma_case", sigma.case)?;
        Ok(d)
    }

    fn weinberg(&self, z: f64) -> PyResult<PyWeinberg> {
        Ok(PyWeinberg {
            inner: weinberg::assemble_w(&self.inner, z).map_err(err)?,
        })
    }
}

/// `W(z)` assembled on the family grid.
#[pyclass(name = "Weinberg", module = "pyfockspec")]
struct PyWeinberg {
    inner: WeinbergOperator,
}

#[pymethods]
impl PyWeinberg {
    #[getter]
    fn z(&self) -> f64 {
        self.inner.z
    }

    #[getter]
    fn xi(&self) -> (f64, f64) {
        self.inner.xi
    }

    fn __len__(&self) -> usize {
        self.inner.dim()
    }

    /// `{block: (hs_norm, rank)}`; rank is only computed for row or column blocks.
    fn hs_norms(&self) -> PyResult<Vec<(String, f64, usize)>> {
        let b = weinberg::hs_norm(&self.inner).map_err(err)?;
        Ok(b.into_iter().map(|b| (b.block, b.hs_norm, b.rank)).collect())
    }

    #[pyo3(signature = (count=8))]
    fn singular_values(&self, count: usize) -> PyResult<Vec<f64>> {
        weinberg::singular_decay(&self.inner, count).map_err(err)
    }

    fn apply(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        if x.len() != self.inner.dim() {
            return Err(PyValueError::new_err(format!("expected {} entries", self.inner.dim())));
        }
        Ok(self.inner.apply(&x))
    }
}

/// Lowest eigenvalues of the discretized operator below `cutoff`.
#[pyfunction]
#[pyo3(signature = (params, grid, k=5, cutoff=f64::INFINITY, seed=7))]
fn lowest_eigenvalues(py: Python<'_>, params: &PyParams, grid: &PyGrid, k: usize, cutoff: f64, seed: u64) -> PyResult<Vec<f64>> {
    let model = example_family(&params.inner).map_err(err)?;
    py.detach(|| {
        let op = spectrum::assemble_operator(OperatorKind::H, &model, &grid.inner, None, spectrum::DEFAULT_PAIR_CAP)?;
        spectrum::lowest_eigenvalues(&op, k, cutoff, seed).map(|e| e.values)
    })
    .map_err(err)
}

/// Best fixed-point residual of `W(z)` at each eigenvalue below `m` of the
/// discretized operator, as `(z, candidate, residual)`.
#[pyfunction]
#[pyo3(signature = (params, grid, k=4, seed=7))]
fn fixed_points(py: Python<'_>, params: &PyParams, grid: &PyGrid, k: usize, seed: u64) -> PyResult<Vec<(f64, String, f64)>> {
    let model = example_family(&params.inner).map_err(err)?;
    py.detach(|| {
        let fam = FriedrichsFamily::plain(&model, &grid.inner)?;
        let op = spectrum::assemble_operator(OperatorKind::H, &model, &grid.inner, None, spectrum::DEFAULT_PAIR_CAP)?;
        let eig = spectrum::lowest_eigenvalues(&op, k, fam.m(), seed)?;
        let mut out = Vec::new();
        for (&z, v) in eig.values.iter().zip(&eig.vectors) {
            if let Ok(w) = weinberg::assemble_w(&fam, z) {
                let rep = weinberg::fixed_point_residual(&w, &op.decode(v));
                out.push((z, rep.best, rep.best_residual));
            }
        }
        Ok(out)
    })
    .map_err(err)
}

#[pymodule]
fn pyfockspec(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("FockspecError", m.py().get_type::<FockspecError>())?;
    m.add_class::<PyParams>()?;
    m.add_class::<PyGrid>()?;
    m.add_class::<PyFamily>()?;
    m.add_class::<PyWeinberg>()?;
    m.add_function(wrap_pyfunction!(lowest_eigenvalues, m)?)?;
    m.add_function(wrap_pyfunction!(fixed_points, m)?)?;
    Ok(())
}
