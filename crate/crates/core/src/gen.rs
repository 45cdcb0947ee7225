//! Synthetic cluster generation with injected fail-slow faults.
//!
//! Healthy disks draw latency from a per-host lognormal baseline and
//! throughput from a clipped Gaussian. Two fault styles reproduce the
//! fail-slow symptoms: `Sustained` multiplies baseline latency from the
//! onset day onward, `Spiky` adds Poisson-timed single-sample spikes.
//! Generation is a pure function of the spec, including its seed: every
//! disk draws from a stream derived from (seed, cluster, host, disk), so
//! output does not depend on iteration or worker order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    CollectionWindow, DailyWindow, Date, DiskId, DiskTrace, FaultLabel, Sample, DAY_SECONDS,
    DISKS_PER_HOST, MAX_WINDOW_SAMPLES,
};
use crate::rng::Rng;

/// Fail-slow phenomenology: consistent elevation or recurrent spikes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FaultStyle {
    Sustained,
    Spiky,
}

/// Proportions of fault styles among injected faults; must sum to 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FaultMix {
    pub sustained: f64,
    pub spiky: f64,
}

impl Default for FaultMix {
    fn default() -> Self {
        FaultMix {
            sustained: 0.5,
            spiky: 0.5,
        }
    }
}

/// Parameters of one synthetic cluster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterSpec {
    pub cluster_id: char,
    pub n_hosts: usize,
    pub n_days: usize,
    /// Sampling cadence in seconds; 15 gives the nominal 720 entries/day.
    pub cadence_s: u32,
    pub seed: u64,
    /// Fraction of disks carrying an injected fault.
    pub fault_fraction: f64,
    pub fault_mix: FaultMix,
    /// Latency multiplier for sustained faults (> 1).
    pub sustained_severity: f64,
    /// Spike amplitude multiplier for spiky faults (> 1).
    pub spiky_severity: f64,
    /// Expected spikes per affected daily window.
    pub spike_rate: f64,
    /// First generated calendar day.
    pub start_day: Date,
    pub collection: CollectionWindow,
}

impl Default for ClusterSpec {
    fn default() -> Self {
        ClusterSpec {
            cluster_id: 'A',
            n_hosts: 2,
            n_days: 10,
            cadence_s: 15,
            seed: 0,
            fault_fraction: 0.05,
            fault_mix: FaultMix::default(),
            sustained_severity: 3.0,
            spiky_severity: 10.0,
            spike_rate: 20.0,
            start_day: Date::from_ymd(2024, 1, 1),
            collection: CollectionWindow::default(),
        }
    }
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n_hosts < 1 {
            return Err(Error::Config("n_hosts must be >= 1".into()));
        }
        if self.n_days < 1 {
            return Err(Error::Config("n_days must be >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.fault_fraction) {
            return Err(Error::Config(format!(
                "fault_fraction {} outside [0,1]",
                self.fault_fraction
            )));
        }
        let mix_sum = self.fault_mix.sustained + self.fault_mix.spiky;
        if (mix_sum - 1.0).abs() > 1e-9 || self.fault_mix.sustained < 0.0 || self.fault_mix.spiky < 0.0 {
            return Err(Error::Config(format!("fault_mix must sum to 1, got {mix_sum}")));
        }
        if self.sustained_severity <= 1.0 || self.spiky_severity <= 1.0 {
            return Err(Error::Config("fault severities must exceed 1".into()));
        }
        let window_s = (self.collection.end_s - self.collection.start_s) as usize;
        if self.cadence_s == 0 || window_s / self.cadence_s as usize > MAX_WINDOW_SAMPLES {
            return Err(Error::Config(format!(
                "cadence {}s yields more than {MAX_WINDOW_SAMPLES} samples per window",
                self.cadence_s
            )));
        }
        Ok(())
    }

    /// Samples per daily window at this cadence.
    pub fn samples_per_window(&self) -> usize {
        (self.collection.end_s - self.collection.start_s) as usize / self.cadence_s as usize
    }

    pub fn host_name(&self, host_idx: usize) -> String {
        format!("h{host_idx:03}")
    }
}

/// One injected fault and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectedFault {
    pub id: DiskId,
    pub style: FaultStyle,
    pub onset_day: Date,
    /// Latency multiplier (sustained) or spike amplitude (spiky).
    pub severity: f64,
    /// Expected spikes per window; spiky faults only.
    pub spike_rate: Option<f64>,
}

/// Everything a generation run produces.
#[derive(Debug, Clone)]
pub struct GeneratedCluster {
    pub traces: Vec<DiskTrace>,
    pub truth: Vec<FaultLabel>,
    pub faults: Vec<InjectedFault>,
}

/// Generates a full cluster: 12 traces per host, per-day truth labels,
/// and the injected fault list.
pub fn generate_cluster(spec: &ClusterSpec) -> Result<GeneratedCluster> {
    spec.validate()?;
    let root = Rng::new(spec.seed).derive(&format!("gen/{}", spec.cluster_id));
    let faults = plan_faults(spec, &root);

    let mut traces = Vec::with_capacity(spec.n_hosts * DISKS_PER_HOST as usize);
    let mut truth = Vec::new();
    for host_idx in 0..spec.n_hosts {
        let host = spec.host_name(host_idx);
        let mut host_rng = root.derive(&format!("host/{host}"));
        // Per-host baseline: hosts differ mildly, disks within a host share it.
        let median_lat = 0.5 * (0.1 * host_rng.normal()).exp();
        let mean_tp = host_rng.normal_with(100.0, 3.0);
        for disk in 0..DISKS_PER_HOST {
            let id = DiskId::new(spec.cluster_id, host.clone(), disk)?;
            let fault = faults.iter().find(|f| f.id == id);
            let mut rng = root.derive(&format!("disk/{id}"));
            let trace = generate_disk(spec, &id, median_lat, mean_tp, fault, &mut rng)?;
            for day in 0..spec.n_days {
                let date = spec.start_day.add_days(day as i64);
                let faulty = fault.map(|f| f.onset_day <= date).unwrap_or(false);
                truth.push(FaultLabel::ground_truth(id.clone(), date, faulty));
            }
            traces.push(trace);
        }
    }
    Ok(GeneratedCluster { traces, truth, faults })
}

fn plan_faults(spec: &ClusterSpec, root: &Rng) -> Vec<InjectedFault> {
    let total_disks = spec.n_hosts * DISKS_PER_HOST as usize;
    let mut n_faults = (spec.fault_fraction * total_disks as f64).round() as usize;
    if spec.fault_fraction > 0.0 && n_faults == 0 {
        n_faults = 1; // documented rounding: at least one fault when requested
    }
    let mut rng = root.derive("faults");
    let chosen = rng.sample_indices(total_disks, n_faults);
    chosen
        .into_iter()
        .map(|flat| {
            let host = spec.host_name(flat / DISKS_PER_HOST as usize);
            let disk = (flat % DISKS_PER_HOST as usize) as u8;
            let id = DiskId::new(spec.cluster_id, host, disk).expect("generated id is valid");
            let style = if rng.next_f64() < spec.fault_mix.sustained {
                FaultStyle::Sustained
            } else {
                FaultStyle::Spiky
            };
            let onset_day = spec.start_day.add_days(rng.next_below(spec.n_days) as i64);
            InjectedFault {
                id,
                style,
                onset_day,
                severity: match style {
                    FaultStyle::Sustained => spec.sustained_severity,
                    FaultStyle::Spiky => spec.spiky_severity,
                },
                spike_rate: match style {
                    FaultStyle::Sustained => None,
                    FaultStyle::Spiky => Some(spec.spike_rate),
                },
            }
        })
        .collect()
}

fn generate_disk(
    spec: &ClusterSpec,
    id: &DiskId,
    median_lat: f64,
    mean_tp: f64,
    fault: Option<&InjectedFault>,
    rng: &mut Rng,
) -> Result<DiskTrace> {
    let per_window = spec.samples_per_window();
    let mu = median_lat.ln();
    let mut samples = Vec::with_capacity(per_window * spec.n_days);
    for day in 0..spec.n_days {
        let date = spec.start_day.add_days(day as i64);
        let day_start = date.days() * DAY_SECONDS + spec.collection.start_s as i64;
        let active = fault.map(|f| f.onset_day <= date).unwrap_or(false);
        let mut lats: Vec<f64> = (0..per_window).map(|_| rng.lognormal(mu, 0.25)).collect();
        if active {
            match fault.unwrap().style {
                FaultStyle::Sustained => {
                    for l in &mut lats {
                        *l *= fault.unwrap().severity;
                    }
                }
                FaultStyle::Spiky => {
                    // Every active window carries at least one spike, so the
                    // per-day truth label always reflects an observable symptom.
                    let rate = fault.unwrap().spike_rate.unwrap_or(0.0);
                    let n_spikes = rng.poisson(rate).max(1) as usize;
                    for pos in rng.sample_indices(per_window, n_spikes) {
                        lats[pos] *= fault.unwrap().severity;
                    }
                }
            }
        }
        for (i, lat) in lats.into_iter().enumerate() {
            let tp = rng.normal_with(mean_tp, 10.0).max(0.0);
            samples.push(Sample::new(
                day_start + (i as u32 * spec.cadence_s) as i64,
                lat,
                tp,
            )?);
        }
    }
    DiskTrace::new(id.clone(), samples)
}

/// Convenience: all daily windows of a generated cluster, fleet-wide.
pub fn cluster_windows(cluster: &GeneratedCluster) -> Result<Vec<DailyWindow>> {
    let mut windows = Vec::new();
    for trace in &cluster.traces {
        windows.extend(crate::model::window_split(trace)?);
    }
    Ok(windows)
}
