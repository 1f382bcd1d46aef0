use std::io::Write;

use serde::Serialize;

use crate::lpv::ParamTrajectory;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SimEvent {
    /// Parameter jump at a switch time.
    Switch { t: f64, rho: Vec<f64> },
    /// Gain pulled back onto the box after a small drift.
    Clamp { t: f64, drift: f64 },
}

impl SimEvent {
    pub fn time(&self) -> f64 {
        match self {
            SimEvent::Switch { t, .. } | SimEvent::Clamp { t, .. } => *t,
        }
    }

    fn comment(&self) -> String {
        match self {
            SimEvent::Switch { t, rho } => {
                let r: Vec<String> = rho.iter().map(|v| format!("{v:.16e}")).collect();
                format!("# switch t={t:.16e} rho={}", r.join(";"))
            }
            SimEvent::Clamp { t, drift } => format!("# clamp t={t:.16e} drift={drift:.16e}"),
        }
    }
}

/// Sampled closed-loop run, one row per accepted step plus the initial row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimTrace {
    pub n: usize,
    pub m: usize,
    pub p: usize,
    pub t: Vec<f64>,
    pub x: Vec<Vec<f64>>,
    /// `vec(K)` per row.
    pub k: Vec<Vec<f64>>,
    pub rho: Vec<Vec<f64>>,
    /// `xᵀ(Q + KᵀRK)x`.
    pub cost_rate: Vec<f64>,
    /// Accumulated cost `J(t)`.
    pub cost: Vec<f64>,
    /// `min g(vec K)` before any clamp; NaN without a gain box.
    pub min_g: Vec<f64>,
    pub events: Vec<SimEvent>,
    pub trajectory: ParamTrajectory,
    pub x0: Vec<f64>,
    pub horizon: f64,
    /// Whether the gain followed the projected gradient flow.
    pub dynamic: bool,
}

impl SimTrace {
    pub(crate) fn empty(
        dims: (usize, usize, usize),
        trajectory: ParamTrajectory,
        x0: Vec<f64>,
        horizon: f64,
        dynamic: bool,
    ) -> Self {
        Self {
            n: dims.0,
            m: dims.1,
            p: dims.2,
            t: Vec::new(),
            x: Vec::new(),
            k: Vec::new(),
            rho: Vec::new(),
            cost_rate: Vec::new(),
            cost: Vec::new(),
            min_g: Vec::new(),
            events: Vec::new(),
            trajectory,
            x0,
            horizon,
            dynamic,
        }
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn final_cost(&self) -> f64 {
        self.cost.last().copied().unwrap_or(0.0)
    }

    pub fn final_x(&self) -> &[f64] {
        self.x.last().map_or(&[], Vec::as_slice)
    }

    pub fn final_k(&self) -> &[f64] {
        self.k.last().map_or(&[], Vec::as_slice)
    }

    /// Smallest recorded `min g`; NaN rows are ignored.
    pub fn worst_min_g(&self) -> f64 {
        self.min_g
            .iter()
            .copied()
            .filter(|v| !v.is_nan())
            .fold(f64::INFINITY, f64::min)
    }

    pub fn header(&self) -> String {
        let mut cols = vec!["t".to_string()];
        cols.extend((1..=self.n).map(|i| format!("x{i}")));
        cols.extend((1..=self.m * self.n).map(|i| format!("K{i}")));
        cols.extend((1..=self.p).map(|i| format!("rho{i}")));
        cols.extend(["cost_rate", "cost", "min_g"].map(String::from));
        cols.join(",")
    }

    /// CSV export with 17 significant digits; events become `#` comment
    /// lines after the row at which they occur.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "{}", self.header())?;
        let mut events = self.events.iter().peekable();
        for i in 0..self.len() {
            let mut row = vec![self.t[i]];
            row.extend(&self.x[i]);
            row.extend(&self.k[i]);
            row.extend(&self.rho[i]);
            row.extend([self.cost_rate[i], self.cost[i], self.min_g[i]]);
            let cells: Vec<String> = row.iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(out, "{}", cells.join(","))?;
            while let Some(e) = events.next_if(|e| e.time() <= self.t[i]) {
                writeln!(out, "{}", e.comment())?;
            }
        }
        for e in events {
            writeln!(out, "{}", e.comment())?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}
