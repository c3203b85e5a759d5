use std::collections::{HashMap, HashSet, VecDeque};

use super::{BusType, Grid};

/// Invariant checks that do not depend on topology.
pub fn structural_violations(grid: &Grid) -> Vec<String> {
    let mut out = Vec::new();
    if !(grid.base_mva > 0.0) {
        out.push(format!("base_mva must be positive, got {}", grid.base_mva));
    }

    let mut ids = HashSet::new();
    for b in &grid.buses {
        if !ids.insert(b.id) {
            out.push(format!("duplicate bus id {}", b.id));
        }
        if !(b.min_vm_pu > 0.0) || !(b.min_vm_pu <= b.max_vm_pu) {
            out.push(format!(
                "bus {}: voltage bounds must satisfy 0 < min_vm_pu ({}) <= max_vm_pu ({})",
                b.id, b.min_vm_pu, b.max_vm_pu
            ));
        }
        if !b.vn_kv.is_finite() {
            out.push(format!("bus {}: vn_kv is not finite", b.id));
        }
    }

    let slack_buses: Vec<usize> = grid
        .buses
        .iter()
        .filter(|b| b.bus_type == BusType::Slack)
        .map(|b| b.id)
        .collect();
    match slack_buses.len() {
        0 => out.push("no bus is marked as slack".to_string()),
        1 if slack_buses[0] != grid.slack.bus => out.push(format!(
            "slack unit sits at bus {} but bus {} is marked as slack",
            grid.slack.bus, slack_buses[0]
        )),
        1 => {}
        _ => out.push(format!("multiple slack buses: {slack_buses:?}")),
    }
    if !ids.contains(&grid.slack.bus) {
        out.push(format!("slack references unknown bus {}", grid.slack.bus));
    }
    let s = &grid.slack;
    if !(s.min_p_mw <= s.max_p_mw) || !(s.min_q_mvar <= s.max_q_mvar) {
        out.push("slack: P/Q bounds are inverted".to_string());
    }
    if !(s.vm_pu > 0.0) {
        out.push(format!("slack: vm_pu must be positive, got {}", s.vm_pu));
    }
    if !(s.cost.c >= 0.0) {
        out.push(format!("slack: quadratic cost {} is negative", s.cost.c));
    }

    let mut branch_ids = HashSet::new();
    for br in &grid.branches {
        if !branch_ids.insert(br.id) {
            out.push(format!("duplicate branch id {}", br.id));
        }
        for bus in [br.from_bus, br.to_bus] {
            if !ids.contains(&bus) {
                out.push(format!("branch {} references unknown bus {bus}", br.id));
            }
        }
        if !(br.r_pu >= 0.0) {
            out.push(format!("branch {}: negative resistance {}", br.id, br.r_pu));
        }
        if br.in_service && br.x_pu == 0.0 {
            out.push(format!("branch {}: zero reactance while in service", br.id));
        }
        if !(br.tap_ratio > 0.0) {
            out.push(format!("branch {}: tap_ratio must be positive, got {}", br.id, br.tap_ratio));
        }
        if !(br.x_pu.is_finite() && br.b_charging_pu.is_finite() && br.shift_rad.is_finite()) {
            out.push(format!("branch {}: non-finite parameters", br.id));
        }
    }

    let mut gen_ids = HashSet::new();
    for g in &grid.generators {
        if !gen_ids.insert(g.id) {
            out.push(format!("duplicate generator id {}", g.id));
        }
        if !ids.contains(&g.bus) {
            out.push(format!("generator {} references unknown bus {}", g.id, g.bus));
        }
        if !(g.min_p_mw <= g.max_p_mw) || !(g.min_q_mvar <= g.max_q_mvar) {
            out.push(format!("generator {}: P/Q bounds are inverted", g.id));
        }
        if !(g.vm_pu > 0.0) {
            out.push(format!("generator {}: vm_pu must be positive, got {}", g.id, g.vm_pu));
        }
        if !(g.cost.c >= 0.0) {
            out.push(format!("generator {}: quadratic cost {} is negative", g.id, g.cost.c));
        }
    }
    for l in &grid.loads {
        if !ids.contains(&l.bus) {
            out.push(format!("load {} references unknown bus {}", l.id, l.bus));
        }
        if !(l.p_mw.is_finite() && l.q_mvar.is_finite()) {
            out.push(format!("load {}: non-finite demand", l.id));
        }
    }
    for sh in &grid.shunts {
        if !ids.contains(&sh.bus) {
            out.push(format!("shunt references unknown bus {}", sh.bus));
        }
        if !(sh.g_pu.is_finite() && sh.b_pu.is_finite()) {
            out.push(format!("shunt at bus {}: non-finite admittance", sh.bus));
        }
    }
    out
}

/// Buses reachable from the slack through in-service branches between
/// in-service buses, as dense indices.
pub(crate) fn reachable_from_slack(grid: &Grid) -> Vec<bool> {
    let idx = grid.bus_index();
    let n = grid.n_buses();
    let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
    for br in grid.branches.iter().filter(|b| b.in_service) {
        let (Some(&f), Some(&t)) = (idx.get(&br.from_bus), idx.get(&br.to_bus)) else {
            continue;
        };
        if grid.buses[f].in_service && grid.buses[t].in_service {
            adj[f].push(t);
            adj[t].push(f);
        }
    }
    let mut seen = vec![false; n];
    if let Some(&s) = idx.get(&grid.slack.bus) {
        seen[s] = true;
        let mut queue = VecDeque::from([s]);
        while let Some(i) = queue.pop_front() {
            for &k in &adj[i] {
                if !seen[k] {
                    seen[k] = true;
                    queue.push_back(k);
                }
            }
        }
    }
    seen
}

/// All invariant violations plus islanding of load/generator buses. An
/// empty list means the grid can be handed to the solvers.
pub fn validate_grid(grid: &Grid) -> Vec<String> {
    let mut out = structural_violations(grid);
    if !out.is_empty() {
        return out;
    }
    let idx = grid.bus_index();
    let reach = reachable_from_slack(grid);
    let mut reported: HashMap<usize, &str> = HashMap::new();
    for l in grid.loads.iter().filter(|l| l.in_service) {
        if !reach[idx[&l.bus]] {
            reported.entry(l.bus).or_insert("load");
        }
    }
    for g in grid.generators.iter().filter(|g| g.in_service) {
        if !reach[idx[&g.bus]] {
            reported.entry(g.bus).or_insert("generator");
        }
    }
    let mut islanded: Vec<_> = reported.into_iter().collect();
    islanded.sort();
    for (bus, what) in islanded {
        out.push(format!(
            "islanding: {what} bus {bus} is not connected to slack bus {}",
            grid.slack.bus
        ));
    }
    out
}
