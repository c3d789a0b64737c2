use nalgebra::{DMatrix, DVector};

use crate::linalg::is_positive_definite;
use crate::metric::MetricSample;
use crate::neural::{predict_metric, DeepLstmModel, StreamState};
use crate::{Error, Result};

/// Supplies `M(x, t)` to the online estimator and controller.
pub trait MetricSource: Send {
    /// Short label used in run outputs (`ncm`, `cvstem`, ...).
    fn tag(&self) -> &str;
    /// Metric at `(x, t)`. Called once per grid step, in time order.
    fn metric(&mut self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>>;
    /// Forgets any per-run state.
    fn reset(&mut self) {}
}

#[derive(Debug, Clone)]
pub struct ConstantMetric {
    m: DMatrix<f64>,
}

impl ConstantMetric {
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        if !is_positive_definite(&m) {
            return Err(Error::NotPositiveDefinite("constant metric".into()));
        }
        Ok(ConstantMetric { m })
    }
}

impl MetricSource for ConstantMetric {
    fn tag(&self) -> &str {
        "constant"
    }

    fn metric(&mut self, _x: &DVector<f64>, _t: f64) -> Result<DMatrix<f64>> {
        Ok(self.m.clone())
    }
}

/// CV-STEM samples on a uniform grid, looked up by time (zero-order hold,
/// clamped to the sampled horizon).
#[derive(Debug, Clone)]
pub struct SampledMetric {
    t0: f64,
    dt: f64,
    metrics: Vec<DMatrix<f64>>,
}

impl SampledMetric {
    pub fn new(samples: &[MetricSample]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Config("no metric samples".into()));
        }
        let metrics = samples
            .iter()
            .enumerate()
            .map(|(i, s)| s.metric().map_err(|e| e.context(format!("sample {i}"))))
            .collect::<Result<Vec<_>>>()?;
        let dt = if samples.len() > 1 { samples[1].t - samples[0].t } else { 1.0 };
        Ok(SampledMetric {
            t0: samples[0].t,
            dt,
            metrics,
        })
    }

    pub fn len(&self) -> usize {
        self.metrics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.metrics.is_empty()
    }

    pub fn at_index(&self, k: usize) -> &DMatrix<f64> {
        &self.metrics[k.min(self.metrics.len() - 1)]
    }
}

impl MetricSource for SampledMetric {
    fn tag(&self) -> &str {
        "cvstem"
    }

    fn metric(&mut self, _x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        let k = ((t - self.t0) / self.dt + 1e-6).floor().max(0.0) as usize;
        Ok(self.at_index(k).clone())
    }
}

/// Streaming neural contraction metric: every call feeds one state into
/// the recurrent model.
#[derive(Debug, Clone)]
pub struct NcmMetric {
    model: DeepLstmModel,
    state: StreamState,
    last: Option<(f64, DMatrix<f64>)>,
}

impl NcmMetric {
    pub fn new(model: DeepLstmModel) -> Self {
        let state = model.stream();
        NcmMetric {
            model,
            state,
            last: None,
        }
    }
}

impl MetricSource for NcmMetric {
    fn tag(&self) -> &str {
        "ncm"
    }

    fn metric(&mut self, x: &DVector<f64>, t: f64) -> Result<DMatrix<f64>> {
        if let Some((tl, m)) = &self.last {
            if *tl == t {
                return Ok(m.clone());
            }
        }
        let theta = self.model.stream_step(&mut self.state, x, t)?;
        let m = predict_metric(&theta, self.model.state_dim)?;
        self.last = Some((t, m.clone()));
        Ok(m)
    }

    fn reset(&mut self) {
        self.state = self.model.stream();
        self.last = None;
    }
}
