use std::io::{Read, Write};

use nalgebra::DVector;

use crate::linalg::fmt17;
use crate::{Error, Result};

/// States on a uniform time grid, with optional held inputs and realized
/// disturbance samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Option<Vec<DVector<f64>>>,
    pub disturbances: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>) -> Result<Self> {
        if times.len() != states.len() {
            return Err(Error::Shape(format!(
                "{} times but {} states",
                times.len(),
                states.len()
            )));
        }
        if times.is_empty() {
            return Err(Error::Shape("empty trajectory".into()));
        }
        if times.len() > 1 {
            let dt = times[1] - times[0];
            if !(dt > 0.0) {
                return Err(Error::Domain("times must be strictly increasing".into()));
            }
            for w in times.windows(2) {
                let step = w[1] - w[0];
                if !(step > 0.0) || (step - dt).abs() > 1e-9 * dt.max(1.0) {
                    return Err(Error::Domain("time grid must be uniform".into()));
                }
            }
        }
        Ok(Trajectory {
            times,
            states,
            inputs: None,
            disturbances: None,
        })
    }

    /// Number of grid points (`N + 1`).
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Number of intervals `N`.
    pub fn steps(&self) -> usize {
        self.times.len().saturating_sub(1)
    }

    pub fn dt(&self) -> f64 {
        if self.times.len() < 2 {
            0.0
        } else {
            self.times[1] - self.times[0]
        }
    }

    pub fn state_dim(&self) -> usize {
        self.states[0].len()
    }

    /// Grid index at or before `t`, clamped to the grid.
    pub fn index_at(&self, t: f64) -> usize {
        let dt = self.dt();
        if dt <= 0.0 {
            return 0;
        }
        let k = ((t - self.times[0]) / dt + 1e-9).floor();
        (k.max(0.0) as usize).min(self.len() - 1)
    }

    /// Every `stride`-th grid point (the last point is always kept when it
    /// falls on the coarse grid).
    pub fn subsample(&self, stride: usize) -> Result<Trajectory> {
        let stride = stride.max(1);
        let idx: Vec<usize> = (0..self.len()).step_by(stride).collect();
        let mut out = Trajectory::new(
            idx.iter().map(|&i| self.times[i]).collect(),
            idx.iter().map(|&i| self.states[i].clone()).collect(),
        )?;
        out.inputs = self.inputs.as_ref().map(|u| idx.iter().map(|&i| u[i].clone()).collect());
        out.disturbances = self
            .disturbances
            .as_ref()
            .map(|d| idx.iter().map(|&i| d[i].clone()).collect());
        Ok(out)
    }

    /// CSV with header `t,x0..,u0..,d0..` and 17 significant digits.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let n = self.state_dim();
        let m = self.inputs.as_ref().map_or(0, |u| u[0].len());
        let k = self.disturbances.as_ref().map_or(0, |d| d[0].len());
        let mut header = vec!["t".to_string()];
        header.extend((0..n).map(|i| format!("x{i}")));
        header.extend((0..m).map(|i| format!("u{i}")));
        header.extend((0..k).map(|i| format!("d{i}")));
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut row = vec![fmt17(self.times[i])];
            row.extend(self.states[i].iter().map(|v| fmt17(*v)));
            if let Some(u) = &self.inputs {
                row.extend(u[i].iter().map(|v| fmt17(*v)));
            }
            if let Some(d) = &self.disturbances {
                row.extend(d[i].iter().map(|v| fmt17(*v)));
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Trajectory> {
        let mut r = csv::Reader::from_reader(reader);
        let header = r.headers()?.clone();
        let cols: Vec<String> = header.iter().map(|s| s.trim().to_string()).collect();
        if cols.first().map(String::as_str) != Some("t") {
            return Err(Error::Parse("trajectory CSV must start with a 't' column".into()));
        }
        let pick = |prefix: char| -> Vec<usize> {
            cols.iter()
                .enumerate()
                .filter(|(_, c)| c.starts_with(prefix) && c[1..].parse::<usize>().is_ok())
                .map(|(i, _)| i)
                .collect()
        };
        let (xs, us, ds) = (pick('x'), pick('u'), pick('d'));
        if xs.is_empty() {
            return Err(Error::Parse("trajectory CSV has no state columns".into()));
        }
        let mut times = Vec::new();
        let mut states = Vec::new();
        let mut inputs = Vec::new();
        let mut dist = Vec::new();
        for rec in r.records() {
            let rec = rec?;
            let vals: Vec<f64> = rec
                .iter()
                .map(|s| s.trim().parse::<f64>().map_err(|e| Error::Parse(format!("'{s}': {e}"))))
                .collect::<Result<_>>()?;
            let take = |ix: &[usize]| DVector::from_iterator(ix.len(), ix.iter().map(|&i| vals[i]));
            times.push(vals[0]);
            states.push(take(&xs));
            inputs.push(take(&us));
            dist.push(take(&ds));
        }
        let mut traj = Trajectory::new(times, states)?;
        if !us.is_empty() {
            traj.inputs = Some(inputs);
        }
        if !ds.is_empty() {
            traj.disturbances = Some(dist);
        }
        Ok(traj)
    }
}


#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_is_exact() {
        let mut t = Trajectory::new(
            vec![0.0, 0.1, 0.2],
            vec![
                DVector::from_vec(vec![1.0 / 3.0, -2.5]),
                DVector::from_vec(vec![0.1, 1e-300]),
                DVector::from_vec(vec![std::f64::consts::PI, 7.0]),
            ],
        )
        .unwrap();
        t.inputs = Some(vec![DVector::from_element(1, 0.25); 3]);
        let mut buf = Vec::new();
        t.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,x0,x1,u0\n"));
        let back = Trajectory::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, t);
    }

    #[test]
    fn rejects_nonuniform_grid() {
        let s = vec![DVector::zeros(1); 3];
        assert!(Trajectory::new(vec![0.0, 0.1, 0.3], s.clone()).is_err());
        assert!(Trajectory::new(vec![0.0, 0.1], s).is_err());
    }
}
