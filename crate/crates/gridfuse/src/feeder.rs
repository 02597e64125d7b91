//! Synthetic ground truth: radial feeder model, residential load profiles,
//! linearized (loss-neglecting) branch-flow voltages, and multi-rate
//! measurement sampling.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seeding;
use crate::timeseries::{Phase, Quantity, TimeSeriesTask, SECONDS_PER_DAY};

pub const MINUTES_PER_DAY: usize = 1440;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Bus {
    pub id: String,
    pub parent: Option<String>,
}

/// Radial feeder: a tree of buses rooted at the substation plus per-line
/// series impedance in per-unit.
#[derive(Debug, Clone)]
pub struct FeederModel {
    buses: Vec<Bus>,
    /// keyed by child bus id
    lines: HashMap<String, (f64, f64)>,
    pub substation_v_pu: f64,
    pub s_base_kw: f64,
    root: String,
    children: HashMap<String, Vec<String>>,
}

#[derive(Debug, Serialize, Deserialize)]
struct FeederDoc {
    #[serde(default = "default_v")]
    substation_v_pu: f64,
    #[serde(default = "default_sbase")]
    s_base_kw: f64,
    buses: Vec<Bus>,
    lines: Vec<LineDoc>,
}

#[derive(Debug, Serialize, Deserialize)]
struct LineDoc {
    from: String,
    to: String,
    r_pu: f64,
    x_pu: f64,
}

fn default_v() -> f64 {
    1.0
}

fn default_sbase() -> f64 {
    1000.0
}

impl FeederModel {
    pub fn from_json_str(text: &str, origin: &str) -> Result<FeederModel> {
        let doc: FeederDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: origin.to_string(),
            line: e.line(),
            msg: e.to_string(),
        })?;
        FeederModel::from_doc(doc)
    }

    /// Bundled single-phase-equivalent 37-bus model.
    pub fn ieee37() -> FeederModel {
        FeederModel::from_json_str(include_str!("../assets/ieee37_sp.json"), "ieee37_sp.json")
            .expect("bundled feeder asset is valid")
    }

    fn from_doc(doc: FeederDoc) -> Result<FeederModel> {
        if !(doc.substation_v_pu > 0.0) || !(doc.s_base_kw > 0.0) {
            return Err(Error::invalid("substation_v_pu and s_base_kw must be > 0"));
        }
        let mut seen = std::collections::HashSet::new();
        for b in &doc.buses {
            if !seen.insert(b.id.clone()) {
                return Err(Error::invalid(format!("duplicate bus id {:?}", b.id)));
            }
        }
        let roots: Vec<&Bus> = doc.buses.iter().filter(|b| b.parent.is_none()).collect();
        if roots.len() != 1 {
            return Err(Error::invalid(format!(
                "expected exactly one root bus, found {}",
                roots.len()
            )));
        }
        let root = roots[0].id.clone();
        let mut children: HashMap<String, Vec<String>> = HashMap::new();
        for b in &doc.buses {
            children.entry(b.id.clone()).or_default();
            if let Some(p) = &b.parent {
                if !seen.contains(p) {
                    return Err(Error::invalid(format!(
                        "bus {:?} references unknown parent {:?}",
                        b.id, p
                    )));
                }
                children.entry(p.clone()).or_default().push(b.id.clone());
            }
        }
        // reachability from the root detects parent cycles
        let mut reachable = std::collections::HashSet::new();
        let mut stack = vec![root.clone()];
        while let Some(b) = stack.pop() {
            if reachable.insert(b.clone()) {
                stack.extend(children[&b].iter().cloned());
            }
        }
        if let Some(off) = doc.buses.iter().find(|b| !reachable.contains(&b.id)) {
            return Err(Error::invalid(format!(
                "cycle or disconnected component: edge {:?} -> {:?} never reaches the root",
                off.parent.clone().unwrap_or_default(),
                off.id
            )));
        }

        let parent_of: HashMap<&str, &str> = doc
            .buses
            .iter()
            .filter_map(|b| b.parent.as_deref().map(|p| (b.id.as_str(), p)))
            .collect();
        let mut lines = HashMap::new();
        for l in &doc.lines {
            if l.r_pu < 0.0 || l.x_pu < 0.0 {
                return Err(Error::invalid(format!(
                    "line {:?} -> {:?} has negative impedance (r={}, x={})",
                    l.from, l.to, l.r_pu, l.x_pu
                )));
            }
            match parent_of.get(l.to.as_str()) {
                Some(&p) if p == l.from => {}
                _ => {
                    return Err(Error::invalid(format!(
                        "line {:?} -> {:?} does not match a parent-child pair",
                        l.from, l.to
                    )))
                }
            }
            if lines.insert(l.to.clone(), (l.r_pu, l.x_pu)).is_some() {
                return Err(Error::invalid(format!("duplicate line into bus {:?}", l.to)));
            }
        }
        for b in &doc.buses {
            if b.parent.is_some() && !lines.contains_key(&b.id) {
                return Err(Error::invalid(format!(
                    "missing line for bus {:?} from its parent",
                    b.id
                )));
            }
        }
        Ok(FeederModel {
            buses: doc.buses,
            lines,
            substation_v_pu: doc.substation_v_pu,
            s_base_kw: doc.s_base_kw,
            root,
            children,
        })
    }

    pub fn bus_ids(&self) -> Vec<String> {
        self.buses.iter().map(|b| b.id.clone()).collect()
    }

    pub fn root_id(&self) -> &str {
        &self.root
    }

    pub fn load_bus_ids(&self) -> Vec<String> {
        self.buses
            .iter()
            .filter(|b| b.parent.is_some())
            .map(|b| b.id.clone())
            .collect()
    }

    pub fn n_buses(&self) -> usize {
        self.buses.len()
    }

    pub fn parent_of(&self, bus: &str) -> Option<&str> {
        self.buses
            .iter()
            .find(|b| b.id == bus)
            .and_then(|b| b.parent.as_deref())
    }

    /// Root-first traversal order (parents before children).
    fn topo_order(&self) -> Vec<String> {
        let mut order = Vec::with_capacity(self.buses.len());
        let mut stack = vec![self.root.clone()];
        while let Some(b) = stack.pop() {
            stack.extend(self.children[&b].iter().rev().cloned());
            order.push(b);
        }
        order
    }

    /// Hop depth from the root, normalized to [0,1] by the max depth.
    pub fn normalized_depths(&self) -> HashMap<String, f64> {
        let mut depth: HashMap<String, f64> = HashMap::new();
        for b in self.topo_order() {
            let d = match self.parent_of(&b) {
                None => 0.0,
                Some(p) => depth[p] + 1.0,
            };
            depth.insert(b, d);
        }
        let max = depth.values().cloned().fold(1.0, f64::max);
        for v in depth.values_mut() {
            *v /= max;
        }
        depth
    }
}

/// Reads and validates a feeder JSON file.
pub fn load_feeder(path: impl AsRef<Path>) -> Result<FeederModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    FeederModel::from_json_str(&text, &path.display().to_string())
}

/// Per-minute 24-hour consumption profile at one load bus.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadProfile {
    pub bus_id: String,
    pub p_kw: Vec<f64>,
    pub q_kvar: Vec<f64>,
}

/// Double-peak residential daily curves with seeded per-bus jitter; reactive
/// power follows from the power-factor identity q = p·tan(acos(pf)).
pub fn generate_load_profiles(
    feeder: &FeederModel,
    seed: u64,
    pf: f64,
) -> Result<Vec<LoadProfile>> {
    if !(pf > 0.0 && pf <= 1.0) {
        return Err(Error::invalid(format!("power factor must be in (0,1], got {pf}")));
    }
    let tan_phi = pf.acos().tan();
    let mut out = Vec::new();
    for bus in feeder.load_bus_ids() {
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &format!("load:{bus}")));
        let base = rng.gen_range(5.0..12.0);
        let amp_morning = rng.gen_range(10.0..30.0);
        let amp_evening = rng.gen_range(20.0..45.0);
        let c_morning = 450.0 + rng.gen_range(-30.0..30.0); // ~07:30
        let c_evening = 1140.0 + rng.gen_range(-30.0..30.0); // ~19:00
        let w_morning = 80.0 * rng.gen_range(0.9..1.1);
        let w_evening = 120.0 * rng.gen_range(0.9..1.1);
        // a few slow sinusoids stand in for smooth household variation
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.gen_range(0.5..1.5),
                    rng.gen_range(120.0..360.0),
                    rng.gen_range(0.0..std::f64::consts::TAU),
                )
            })
            .collect();
        let mut p_kw = Vec::with_capacity(MINUTES_PER_DAY);
        for m in 0..MINUTES_PER_DAY {
            let t = m as f64;
            let bump = |c: f64, w: f64| (-((t - c) * (t - c)) / (2.0 * w * w)).exp();
            let mut p = base + amp_morning * bump(c_morning, w_morning)
                + amp_evening * bump(c_evening, w_evening);
            for &(a, period, phase) in &waves {
                p += a * (std::f64::consts::TAU * t / period + phase).sin();
            }
            p_kw.push(p.max(0.5));
        }
        let q_kvar = p_kw.iter().map(|&p| p * tan_phi).collect();
        out.push(LoadProfile { bus_id: bus, p_kw, q_kvar });
    }
    Ok(out)
}

/// LinDistFlow voltage solve for one instant. Loads are per-bus (p, q) in
/// per-unit; returns |v| in per-unit for every bus. The recursion runs in
/// squared magnitudes: w_child = w_parent − 2(r·P_branch + x·Q_branch) with
/// branch flows aggregating all downstream load.
pub fn lindistflow_solve(
    feeder: &FeederModel,
    loads_pu: &HashMap<String, (f64, f64)>,
) -> Result<HashMap<String, f64>> {
    for (bus, &(p, q)) in loads_pu {
        if !p.is_finite() || !q.is_finite() {
            return Err(Error::invalid(format!("non-finite load at bus {bus:?}")));
        }
    }
    let order = feeder.topo_order();
    // children-first accumulation of subtree load
    let mut subtree: HashMap<&str, (f64, f64)> = HashMap::new();
    for bus in order.iter().rev() {
        let own = loads_pu.get(bus.as_str()).copied().unwrap_or((0.0, 0.0));
        let mut acc = own;
        for c in &feeder.children[bus] {
            let s = subtree[c.as_str()];
            acc.0 += s.0;
            acc.1 += s.1;
        }
        subtree.insert(bus.as_str(), acc);
    }
    let mut w: HashMap<String, f64> = HashMap::new();
    let mut v: HashMap<String, f64> = HashMap::new();
    for bus in &order {
        let wb = match feeder.parent_of(bus) {
            None => feeder.substation_v_pu * feeder.substation_v_pu,
            Some(p) => {
                let (r, x) = feeder.lines[bus.as_str()];
                let (pb, qb) = subtree[bus.as_str()];
                w[p] - 2.0 * (r * pb + x * qb)
            }
        };
        if wb <= 0.0 {
            return Err(Error::InfeasibleOperatingPoint(format!(
                "squared voltage {wb} at bus {bus:?}"
            )));
        }
        w.insert(bus.clone(), wb);
        v.insert(bus.clone(), wb.sqrt());
    }
    Ok(v)
}

/// Runs the power flow for all 1440 minutes. Returns |v| per bus per minute.
pub fn solve_day(
    feeder: &FeederModel,
    profiles: &[LoadProfile],
) -> Result<HashMap<String, Vec<f64>>> {
    let mut out: HashMap<String, Vec<f64>> = feeder
        .bus_ids()
        .into_iter()
        .map(|b| (b, Vec::with_capacity(MINUTES_PER_DAY)))
        .collect();
    for m in 0..MINUTES_PER_DAY {
        let loads: HashMap<String, (f64, f64)> = profiles
            .iter()
            .map(|p| {
                (
                    p.bus_id.clone(),
                    (
                        p.p_kw[m] / feeder.s_base_kw,
                        p.q_kvar[m] / feeder.s_base_kw,
                    ),
                )
            })
            .collect();
        let v = lindistflow_solve(feeder, &loads)?;
        for (bus, series) in out.iter_mut() {
            series.push(v[bus]);
        }
    }
    Ok(out)
}

pub fn measurement_task_id(bus: &str, quantity: Quantity) -> String {
    format!("{bus}:{}", quantity.code())
}

/// Samples AMI P/Q tasks at `ami_step` and SCADA voltage tasks at
/// `scada_step` from per-minute curves, with optional relative Gaussian
/// noise (std = noise_rel · per-signal std, seeded per task).
pub fn sample_measurements(
    profiles: &[LoadProfile],
    voltages: &HashMap<String, Vec<f64>>,
    ami_step: f64,
    scada_step: f64,
    noise_rel: f64,
    seed: u64,
) -> Result<Vec<TimeSeriesTask>> {
    for (name, step) in [("ami_step", ami_step), ("scada_step", scada_step)] {
        if !(step > 0.0)
            || (SECONDS_PER_DAY / step).fract() != 0.0
            || (step / 60.0).fract() != 0.0
        {
            return Err(Error::invalid(format!(
                "{name} {step} must divide 86400 and be a whole number of minutes"
            )));
        }
    }
    if noise_rel < 0.0 {
        return Err(Error::invalid("noise_rel must be >= 0"));
    }
    let mut tasks = Vec::new();
    let mut emit = |bus: &str, quantity: Quantity, curve: &[f64], step: f64| -> Result<()> {
        let task_id = measurement_task_id(bus, quantity);
        let count = (SECONDS_PER_DAY / step) as usize;
        let mean = curve.iter().sum::<f64>() / curve.len() as f64;
        let std =
            (curve.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / curve.len() as f64).sqrt();
        let mut rng = ChaCha8Rng::seed_from_u64(seeding::derive(seed, &format!("noise:{task_id}")));
        let noise = Normal::new(0.0, 1.0).expect("unit normal");
        let samples: Vec<(f64, f64)> = (0..count)
            .map(|k| {
                let t = k as f64 * step;
                let idx = (t / 60.0) as usize;
                let mut v = curve[idx];
                if noise_rel > 0.0 {
                    v += noise_rel * std * noise.sample(&mut rng);
                }
                (t, v)
            })
            .collect();
        tasks.push(TimeSeriesTask::new(task_id, bus, Phase::A, quantity, samples)?);
        Ok(())
    };
    for p in profiles {
        emit(&p.bus_id, Quantity::ActivePowerKw, &p.p_kw, ami_step)?;
        emit(&p.bus_id, Quantity::ReactivePowerKvar, &p.q_kvar, ami_step)?;
    }
    let mut buses: Vec<&String> = voltages.keys().collect();
    buses.sort();
    for bus in buses {
        emit(bus, Quantity::VoltageMagPu, &voltages[bus], scada_step)?;
    }
    Ok(tasks)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn two_bus() -> FeederModel {
        FeederModel::from_json_str(
            r#"{
                "buses": [{"id":"sub","parent":null},{"id":"b1","parent":"sub"}],
                "lines": [{"from":"sub","to":"b1","r_pu":0.01,"x_pu":0.01}]
            }"#,
            "inline",
        )
        .unwrap()
    }

    #[test]
    fn bundled_ieee37_is_a_37_bus_tree() {
        let f = FeederModel::ieee37();
        assert_eq!(f.n_buses(), 37);
        assert_eq!(f.root_id(), "799");
        assert_eq!(f.load_bus_ids().len(), 36);
        let depths = f.normalized_depths();
        assert_eq!(depths["799"], 0.0);
        assert!(depths.values().all(|&d| (0.0..=1.0).contains(&d)));
        assert_eq!(depths.values().cloned().fold(0.0, f64::max), 1.0);
    }

    #[test]
    fn rejects_cycles_multiple_roots_and_negative_impedance() {
        let cyc = FeederModel::from_json_str(
            r#"{
                "buses": [{"id":"r","parent":null},{"id":"a","parent":"b"},{"id":"b","parent":"a"}],
                "lines": [{"from":"b","to":"a","r_pu":0.1,"x_pu":0.1},
                          {"from":"a","to":"b","r_pu":0.1,"x_pu":0.1}]
            }"#,
            "inline",
        );
        match cyc {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("cycle"), "{msg}"),
            other => panic!("expected cycle error, got {other:?}"),
        }

        assert!(FeederModel::from_json_str(
            r#"{"buses":[{"id":"a","parent":null},{"id":"b","parent":null}],"lines":[]}"#,
            "inline",
        )
        .is_err());

        let neg = FeederModel::from_json_str(
            r#"{
                "buses": [{"id":"r","parent":null},{"id":"a","parent":"r"}],
                "lines": [{"from":"r","to":"a","r_pu":-0.1,"x_pu":0.1}]
            }"#,
            "inline",
        );
        match neg {
            Err(Error::InvalidArgument(msg)) => assert!(msg.contains("negative"), "{msg}"),
            other => panic!("expected negative-impedance error, got {other:?}"),
        }
    }

    #[test]
    fn zero_load_gives_flat_profile() {
        let f = FeederModel::ieee37();
        let v = lindistflow_solve(&f, &HashMap::new()).unwrap();
        for (_, &vb) in &v {
            assert_relative_eq!(vb, 1.0);
        }
    }

    #[test]
    fn two_bus_hand_case() {
        let f = two_bus();
        let loads = HashMap::from([("b1".to_string(), (1.0, 0.5))]);
        let v = lindistflow_solve(&f, &loads).unwrap();
        // w1 = 1 - 2*(0.01*1 + 0.01*0.5) = 0.97
        assert_relative_eq!(v["b1"], 0.97f64.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(v["sub"], 1.0);
    }

    #[test]
    fn squared_drop_is_linear_in_loads() {
        let f = FeederModel::ieee37();
        let loads: HashMap<String, (f64, f64)> = f
            .load_bus_ids()
            .into_iter()
            .enumerate()
            .map(|(i, b)| (b, (0.01 + 0.001 * i as f64, 0.005)))
            .collect();
        let scaled: HashMap<String, (f64, f64)> = loads
            .iter()
            .map(|(b, &(p, q))| (b.clone(), (2.0 * p, 2.0 * q)))
            .collect();
        let v1 = lindistflow_solve(&f, &loads).unwrap();
        let v2 = lindistflow_solve(&f, &scaled).unwrap();
        for bus in f.bus_ids() {
            let drop1 = 1.0 - v1[&bus] * v1[&bus];
            let drop2 = 1.0 - v2[&bus] * v2[&bus];
            assert_relative_eq!(drop2, 2.0 * drop1, epsilon = 1e-12);
        }
    }

    #[test]
    fn increasing_a_load_weakly_decreases_downstream_voltage() {
        let f = FeederModel::ieee37();
        let mut loads: HashMap<String, (f64, f64)> = f
            .load_bus_ids()
            .into_iter()
            .map(|b| (b, (0.02, 0.01)))
            .collect();
        let before = lindistflow_solve(&f, &loads).unwrap();
        loads.get_mut("734").unwrap().0 += 0.05;
        let after = lindistflow_solve(&f, &loads).unwrap();
        for bus in f.bus_ids() {
            assert!(after[&bus] <= before[&bus] + 1e-15);
        }
    }

    #[test]
    fn profiles_respect_power_factor_and_determinism() {
        let f = FeederModel::ieee37();
        let a = generate_load_profiles(&f, 42, 0.87).unwrap();
        let b = generate_load_profiles(&f, 42, 0.87).unwrap();
        assert_eq!(a, b);
        let ratio = 0.87f64.acos().tan();
        // independent identity: tan(acos(pf)) = sqrt(1/pf^2 - 1)
        assert_relative_eq!(ratio, (1.0f64 / (0.87 * 0.87) - 1.0).sqrt(), epsilon = 1e-12);
        for p in &a {
            assert_eq!(p.p_kw.len(), MINUTES_PER_DAY);
            for (pk, qk) in p.p_kw.iter().zip(&p.q_kvar) {
                assert_relative_eq!(qk / pk, ratio, epsilon = 1e-12);
            }
        }
        let unity = generate_load_profiles(&f, 42, 1.0).unwrap();
        assert!(unity.iter().all(|p| p.q_kvar.iter().all(|&q| q == 0.0)));
        assert!(generate_load_profiles(&f, 0, 0.0).is_err());
    }

    #[test]
    fn voltage_minimum_coincides_with_load_peak() {
        let f = FeederModel::ieee37();
        let profiles = generate_load_profiles(&f, 7, 0.87).unwrap();
        let voltages = solve_day(&f, &profiles).unwrap();
        let total: Vec<f64> = (0..MINUTES_PER_DAY)
            .map(|m| profiles.iter().map(|p| p.p_kw[m]).sum())
            .collect();
        let peak_minute = (0..MINUTES_PER_DAY)
            .max_by(|&a, &b| total[a].partial_cmp(&total[b]).unwrap())
            .unwrap();
        let min_v_at = |m: usize| {
            voltages
                .values()
                .map(|s| s[m])
                .fold(f64::INFINITY, f64::min)
        };
        let v_peak = min_v_at(peak_minute);
        let v_daily_min = (0..MINUTES_PER_DAY).map(min_v_at).fold(f64::INFINITY, f64::min);
        // per-bus peaks are staggered, so the aggregate peak minute need not
        // be the exact argmin of the network voltage — only very close to it
        assert!(v_peak - v_daily_min < 1e-4, "{v_peak} vs {v_daily_min}");
        let min_minute = (0..MINUTES_PER_DAY)
            .min_by(|&a, &b| min_v_at(a).partial_cmp(&min_v_at(b)).unwrap())
            .unwrap();
        assert!(
            (1000..1300).contains(&min_minute),
            "voltage minimum at minute {min_minute}, expected in the evening peak window"
        );
    }

    #[test]
    fn sampling_counts_and_exactness() {
        let f = FeederModel::ieee37();
        let profiles = generate_load_profiles(&f, 3, 0.87).unwrap();
        let voltages = solve_day(&f, &profiles).unwrap();
        let tasks = sample_measurements(&profiles, &voltages, 900.0, 60.0, 0.0, 1).unwrap();
        let ami = tasks
            .iter()
            .find(|t| t.quantity == Quantity::ActivePowerKw)
            .unwrap();
        assert_eq!(ami.len(), 96);
        let scada = tasks
            .iter()
            .find(|t| t.quantity == Quantity::VoltageMagPu)
            .unwrap();
        assert_eq!(scada.len(), 1440);
        // zero noise means exact subsamples of the per-minute curves
        let profile = profiles.iter().find(|p| p.bus_id == ami.bus_id).unwrap();
        for &(t, v) in ami.samples() {
            assert_eq!(v, profile.p_kw[(t / 60.0) as usize]);
        }
        assert!(sample_measurements(&profiles, &voltages, 1000.0, 60.0, 0.0, 1).is_err());
    }
}
