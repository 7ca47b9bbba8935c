//! Per-step trace recording and the CSV trace format.
//!
//! CSV schema, one row per (step, agent):
//! `step,time,agent_id,level,role,tau_0..tau_{d-1},err,u_norm,gamma,retained_hash`

use std::io::Write;

use crate::dynamics::Role;
use crate::engine::Mode;
use crate::error::Result;

/// FNV-1a over the little-endian bytes of the retained ids. Stable across
/// platforms so traces hash identically everywhere.
pub fn retained_hash(ids: &[usize]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &id in ids {
        for b in (id as u64).to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x1000_0000_01b3);
        }
    }
    h
}

#[derive(Debug, Clone)]
pub struct AgentMeta {
    pub id: usize,
    pub level: usize,
    pub role: Role,
}

/// Per-agent sample within one step record.
#[derive(Debug, Clone)]
pub struct AgentSample {
    pub tau: Vec<f64>,
    pub err: f64,
    pub u_norm: f64,
    pub gamma: f64,
    pub retained_hash: u64,
}

#[derive(Debug, Clone)]
pub struct StepRecord {
    pub step: u64,
    pub time: f64,
    pub agents: Vec<AgentSample>,
}

/// Full in-memory trace of a run. Records are strictly increasing in step
/// index, one per executed step; thinning applies only at write time.
#[derive(Debug, Clone)]
pub struct Trace {
    pub mode: Mode,
    /// Seconds per step in continuous mode, 1.0 in discrete mode.
    pub dt: f64,
    pub dim: usize,
    pub agent_meta: Vec<AgentMeta>,
    pub records: Vec<StepRecord>,
    /// Steps at which the filtered sets were refreshed.
    pub refresh_steps: Vec<u64>,
}

impl Trace {
    /// Error time series of one agent.
    pub fn errors_of(&self, agent_id: usize) -> Vec<f64> {
        self.records.iter().map(|r| r.agents[agent_id].err).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.time).collect()
    }

    /// Error of `agent_id` at time `t`, reading the record at or after `t`
    /// (clamped to the final record).
    pub fn error_at_time(&self, agent_id: usize, t: f64) -> f64 {
        let step = if self.dt > 0.0 { (t / self.dt).ceil() as usize } else { 0 };
        let idx = step.min(self.records.len().saturating_sub(1));
        self.records[idx].agents[agent_id].err
    }

    pub fn csv_header(&self) -> String {
        let taus: Vec<String> = (0..self.dim).map(|a| format!("tau_{a}")).collect();
        format!(
            "step,time,agent_id,level,role,{},err,u_norm,gamma,retained_hash",
            taus.join(",")
        )
    }

    /// Writes the trace as CSV, keeping every `thin`-th step (thin = 1 keeps
    /// all). Floats use shortest round-trip formatting, so output is
    /// deterministic and lossless.
    pub fn write_csv<W: Write>(&self, out: &mut W, thin: u64) -> Result<()> {
        let thin = thin.max(1);
        writeln!(out, "{}", self.csv_header())?;
        for record in &self.records {
            if record.step % thin != 0 {
                continue;
            }
            for (meta, sample) in self.agent_meta.iter().zip(&record.agents) {
                let taus: Vec<String> = sample.tau.iter().map(|v| format!("{v}")).collect();
                writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{:016x}",
                    record.step,
                    record.time,
                    meta.id,
                    meta.level,
                    meta.role.as_str(),
                    taus.join(","),
                    sample.err,
                    sample.u_norm,
                    sample.gamma,
                    sample.retained_hash
                )?;
            }
        }
        Ok(())
    }

    pub fn to_csv_string(&self, thin: u64) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, thin).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is utf-8")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_is_order_stable_and_distinguishes_sets() {
        assert_eq!(retained_hash(&[]), 0xcbf2_9ce4_8422_2325);
        assert_eq!(retained_hash(&[1, 2, 3]), retained_hash(&[1, 2, 3]));
        assert_ne!(retained_hash(&[1, 2, 3]), retained_hash(&[1, 2, 4]));
        assert_ne!(retained_hash(&[1, 2]), retained_hash(&[2, 1]));
    }

    #[test]
    fn csv_schema_is_stable() {
        let trace = Trace {
            mode: Mode::Discrete,
            dt: 1.0,
            dim: 2,
            agent_meta: vec![AgentMeta { id: 0, level: 0, role: Role::Leader }],
            records: vec![StepRecord {
                step: 0,
                time: 0.0,
                agents: vec![AgentSample {
                    tau: vec![0.5, -1.25],
                    err: 0.0,
                    u_norm: 0.0,
                    gamma: 1.0,
                    retained_hash: retained_hash(&[]),
                }],
            }],
            refresh_steps: vec![0],
        };
        let csv = trace.to_csv_string(1);
        let mut lines = csv.lines();
        assert_eq!(
            lines.next().unwrap(),
            "step,time,agent_id,level,role,tau_0,tau_1,err,u_norm,gamma,retained_hash"
        );
        assert_eq!(
            lines.next().unwrap(),
            "0,0,0,0,leader,0.5,-1.25,0,0,1,cbf29ce484222325"
        );
    }

    #[test]
    fn thinning_keeps_multiples() {
        let mk = |step: u64| StepRecord {
            step,
            time: step as f64,
            agents: vec![AgentSample {
                tau: vec![0.0, 0.0],
                err: 0.0,
                u_norm: 0.0,
                gamma: 1.0,
                retained_hash: 0,
            }],
        };
        let trace = Trace {
            mode: Mode::Discrete,
            dt: 1.0,
            dim: 2,
            agent_meta: vec![AgentMeta { id: 0, level: 0, role: Role::Normal }],
            records: (0..25).map(mk).collect(),
            refresh_steps: vec![],
        };
        let rows = trace.to_csv_string(10).lines().count() - 1;
        assert_eq!(rows, 3); // steps 0, 10, 20
    }
}
