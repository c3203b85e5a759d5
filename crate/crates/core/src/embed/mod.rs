//! Heterogeneous graph embedding of grids and the on-disk dataset format.
//!
//! Every component becomes one typed node with a fixed, ordered feature
//! table (see [`columns`]). Edges are undirected and connect buses to
//! devices only: a line or transformer node is linked to its two endpoint
//! buses, every other device to its own bus. Branch edges are emitted
//! from-bus first, which is the only orientation information the graph
//! carries.

mod io;

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{Branch, Bus, BusType, CostCurve, Generator, Grid, Load, Shunt, Slack};
use crate::powerflow::GridSolution;

pub use io::{
    dataset_digest, export_dataset, import_dataset, EntryRecord, Manifest, FORMAT_VERSION, MANIFEST_FILE, TEST_FILE,
    TRAIN_FILE,
};

/// A model output: the same tables as a graph's labels.
pub type Prediction = GridSolution;

/// Nominal frequency used for line capacitance columns.
const F_HZ: f64 = 50.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeType {
    Bus,
    Line,
    Transformer,
    Generator,
    Slack,
    Load,
    Capacitor,
}

impl NodeType {
    pub const ALL: [NodeType; 7] = [
        NodeType::Bus,
        NodeType::Line,
        NodeType::Transformer,
        NodeType::Generator,
        NodeType::Slack,
        NodeType::Load,
        NodeType::Capacitor,
    ];
}

/// Feature columns per node type, in storage order. Trailing per-unit
/// columns on lines and transformers, and load `q_mvar`, carry the exact
/// values the unit conversions of the standard columns would round.
pub fn columns(t: NodeType) -> &'static [&'static str] {
    match t {
        NodeType::Bus => &["vn_kv", "min_vm_pu", "max_vm_pu", "in_service"],
        NodeType::Line => &[
            "length_km",
            "r_ohm_per_km",
            "x_ohm_per_km",
            "c_nf_per_km",
            "g_us_per_km",
            "max_i_ka",
            "max_loading_percent",
            "in_service",
            "r_pu",
            "x_pu",
            "b_pu",
            "rate_mva",
        ],
        NodeType::Transformer => &[
            "sn_mva",
            "vn_hv_kv",
            "vn_lv_kv",
            "vk_percent",
            "vkr_percent",
            "pfe_kw",
            "i0_percent",
            "shift_degree",
            "max_loading_percent",
            "in_service",
            "tap_ratio",
            "shift_rad",
            "r_pu",
            "x_pu",
            "b_pu",
            "rate_mva",
        ],
        NodeType::Generator => &[
            "p_mw",
            "vm_pu",
            "sn_mva",
            "min_p_mw",
            "max_p_mw",
            "min_q_mvar",
            "max_q_mvar",
            "in_service",
            "cp0_eur",
            "cp1_eur",
            "cp2_eur",
        ],
        // va_degree holds radians; the manifest records the unit.
        NodeType::Slack => &[
            "va_degree",
            "vm_pu",
            "min_p_mw",
            "max_p_mw",
            "min_q_mvar",
            "max_q_mvar",
            "in_service",
            "cp0_eur",
            "cp1_eur",
            "cp2_eur",
        ],
        NodeType::Load => &[
            "p_mw",
            "const_z_percent",
            "const_i_percent",
            "sn_mva",
            "in_service",
            "q_mvar",
        ],
        NodeType::Capacitor => &["g_pu", "b_pu", "in_service"],
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeTable {
    /// External id of the component behind each row (bus id, branch id,
    /// generator id, load id; slack and capacitors use their bus id).
    pub ids: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
}

impl NodeTable {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    fn push(&mut self, id: usize, row: Vec<f64>) {
        self.ids.push(id);
        self.rows.push(row);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef(pub NodeType, pub usize);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeteroGraph {
    pub base_mva: f64,
    /// One table per node type, all seven always present.
    pub nodes: BTreeMap<NodeType, NodeTable>,
    /// Undirected edges, bus endpoint first.
    pub edges: Vec<(NodeRef, NodeRef)>,
    pub labels: Option<GridSolution>,
}

fn flag(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}

fn z_base(vn_kv: f64, base_mva: f64) -> f64 {
    // Cases without voltage levels keep per-unit values unchanged.
    if vn_kv > 0.0 {
        vn_kv * vn_kv / base_mva
    } else {
        1.0
    }
}

fn cost_cols(c: &CostCurve) -> [f64; 3] {
    [c.a, c.b, c.c]
}

pub fn embed_grid(grid: &Grid) -> HeteroGraph {
    let mut nodes: BTreeMap<NodeType, NodeTable> = NodeType::ALL.iter().map(|&t| (t, NodeTable::default())).collect();
    let mut edges = Vec::new();
    let idx = grid.bus_index();
    let base = grid.base_mva;

    let table = nodes.get_mut(&NodeType::Bus).unwrap();
    for b in &grid.buses {
        table.push(b.id, vec![b.vn_kv, b.min_vm_pu, b.max_vm_pu, flag(b.in_service)]);
    }

    let mut n_lines = 0;
    let mut n_trafos = 0;
    for br in &grid.branches {
        let (f, t) = (idx[&br.from_bus], idx[&br.to_bus]);
        let vf = grid.buses[f].vn_kv;
        let node = if br.is_transformer() {
            let vt = grid.buses[t].vn_kv;
            let sn = if br.rate_mva > 0.0 { br.rate_mva } else { base };
            let k = 100.0 * sn / base;
            let row = vec![
                sn,
                vf,
                vt,
                br.r_pu.hypot(br.x_pu) * k,
                br.r_pu * k,
                0.0,
                br.b_charging_pu * k,
                br.shift_rad.to_degrees(),
                100.0,
                flag(br.in_service),
                br.tap_ratio,
                br.shift_rad,
                br.r_pu,
                br.x_pu,
                br.b_charging_pu,
                br.rate_mva,
            ];
            nodes.get_mut(&NodeType::Transformer).unwrap().push(br.id, row);
            n_trafos += 1;
            NodeRef(NodeType::Transformer, n_trafos - 1)
        } else {
            let zb = z_base(vf, base);
            let max_i_ka = if vf > 0.0 { br.rate_mva / (3f64.sqrt() * vf) } else { 0.0 };
            let row = vec![
                1.0,
                br.r_pu * zb,
                br.x_pu * zb,
                br.b_charging_pu / zb / (2.0 * PI * F_HZ) * 1e9,
                0.0,
                max_i_ka,
                100.0,
                flag(br.in_service),
                br.r_pu,
                br.x_pu,
                br.b_charging_pu,
                br.rate_mva,
            ];
            nodes.get_mut(&NodeType::Line).unwrap().push(br.id, row);
            n_lines += 1;
            NodeRef(NodeType::Line, n_lines - 1)
        };
        edges.push((NodeRef(NodeType::Bus, f), node));
        edges.push((NodeRef(NodeType::Bus, t), node));
    }

    for (k, g) in grid.generators.iter().enumerate() {
        let mut row = vec![
            g.p_mw,
            g.vm_pu,
            base,
            g.min_p_mw,
            g.max_p_mw,
            g.min_q_mvar,
            g.max_q_mvar,
            flag(g.in_service),
        ];
        row.extend(cost_cols(&g.cost));
        nodes.get_mut(&NodeType::Generator).unwrap().push(g.id, row);
        edges.push((NodeRef(NodeType::Bus, idx[&g.bus]), NodeRef(NodeType::Generator, k)));
    }

    let s = &grid.slack;
    let mut row = vec![s.va_rad, s.vm_pu, s.min_p_mw, s.max_p_mw, s.min_q_mvar, s.max_q_mvar, 1.0];
    row.extend(cost_cols(&s.cost));
    nodes.get_mut(&NodeType::Slack).unwrap().push(s.bus, row);
    edges.push((NodeRef(NodeType::Bus, idx[&s.bus]), NodeRef(NodeType::Slack, 0)));

    for (k, l) in grid.loads.iter().enumerate() {
        let row = vec![l.p_mw, 0.0, 0.0, l.p_mw.hypot(l.q_mvar), flag(l.in_service), l.q_mvar];
        nodes.get_mut(&NodeType::Load).unwrap().push(l.id, row);
        edges.push((NodeRef(NodeType::Bus, idx[&l.bus]), NodeRef(NodeType::Load, k)));
    }

    for (k, sh) in grid.shunts.iter().enumerate() {
        nodes
            .get_mut(&NodeType::Capacitor)
            .unwrap()
            .push(sh.bus, vec![sh.g_pu, sh.b_pu, 1.0]);
        edges.push((NodeRef(NodeType::Bus, idx[&sh.bus]), NodeRef(NodeType::Capacitor, k)));
    }

    HeteroGraph {
        base_mva: base,
        nodes,
        edges,
        labels: None,
    }
}

impl HeteroGraph {
    pub fn table(&self, t: NodeType) -> &NodeTable {
        static EMPTY: NodeTable = NodeTable {
            ids: Vec::new(),
            rows: Vec::new(),
        };
        self.nodes.get(&t).unwrap_or(&EMPTY)
    }

    pub fn count(&self, t: NodeType) -> usize {
        self.table(t).len()
    }

    /// Number of label values a complete prediction carries:
    /// two per bus, per generator and for the slack.
    pub fn label_size(&self) -> usize {
        2 * (self.count(NodeType::Bus) + self.count(NodeType::Generator) + 1)
    }

    /// Row counts per node type in [`NodeType::ALL`] order.
    pub fn layout(&self) -> Vec<(NodeType, usize)> {
        NodeType::ALL.iter().map(|&t| (t, self.count(t))).collect()
    }

    /// All feature values, node types in [`NodeType::ALL`] order, rows in
    /// table order.
    pub fn flat_features(&self) -> Vec<f64> {
        NodeType::ALL
            .iter()
            .flat_map(|&t| self.table(t).rows.iter().flatten().copied())
            .collect()
    }

    /// Structural checks: column widths, edge endpoints and degrees, and
    /// absence of duplicate undirected edges.
    pub fn check(&self) -> Result<()> {
        for t in NodeType::ALL {
            let tab = self.table(t);
            if tab.ids.len() != tab.rows.len() {
                return Err(Error::Format(format!("{t:?} table has mismatched ids and rows")));
            }
            if let Some(r) = tab.rows.iter().find(|r| r.len() != columns(t).len()) {
                return Err(Error::Format(format!(
                    "{t:?} row has {} columns, expected {}",
                    r.len(),
                    columns(t).len()
                )));
            }
        }
        let mut degree: BTreeMap<NodeRef, usize> = BTreeMap::new();
        let mut seen = std::collections::HashSet::new();
        for &(a, b) in &self.edges {
            for n in [a, b] {
                if n.1 >= self.count(n.0) {
                    return Err(Error::Format(format!("edge endpoint {n:?} does not exist")));
                }
            }
            if a.0 != NodeType::Bus || b.0 == NodeType::Bus {
                return Err(Error::Format(format!("edge {a:?}-{b:?} is not bus-device")));
            }
            let key = if a < b { (a, b) } else { (b, a) };
            if !seen.insert(key) && !matches!(b.0, NodeType::Line | NodeType::Transformer) {
                return Err(Error::Format(format!("duplicate edge {a:?}-{b:?}")));
            }
            *degree.entry(b).or_default() += 1;
        }
        for t in NodeType::ALL.into_iter().filter(|&t| t != NodeType::Bus) {
            let want = if matches!(t, NodeType::Line | NodeType::Transformer) { 2 } else { 1 };
            for i in 0..self.count(t) {
                let d = degree.get(&NodeRef(t, i)).copied().unwrap_or(0);
                if d != want {
                    return Err(Error::Format(format!("{t:?} node {i} has {d} bus edges, expected {want}")));
                }
            }
        }
        if let Some(l) = &self.labels {
            self.check_prediction(l)?;
        }
        Ok(())
    }

    /// Dimension agreement between a prediction and this graph.
    pub fn check_prediction(&self, p: &Prediction) -> Result<()> {
        let (nb, ng) = (self.count(NodeType::Bus), self.count(NodeType::Generator));
        if p.state.vm.len() != nb || p.state.va.len() != nb || p.gen_p_mw.len() != ng || p.gen_q_mvar.len() != ng {
            return Err(Error::Dimension(format!(
                "prediction has {} buses / {} generators, graph has {nb} / {ng}",
                p.state.vm.len(),
                p.gen_p_mw.len()
            )));
        }
        Ok(())
    }

    /// Endpoint bus rows of every branch node, in edge order (from, to).
    fn branch_ends(&self) -> BTreeMap<NodeRef, Vec<usize>> {
        let mut ends: BTreeMap<NodeRef, Vec<usize>> = BTreeMap::new();
        for &(a, b) in &self.edges {
            ends.entry(b).or_default().push(a.1);
        }
        ends
    }
}

pub fn attach_labels(graph: &HeteroGraph, solution: &GridSolution) -> Result<HeteroGraph> {
    graph.check_prediction(solution)?;
    let mut out = graph.clone();
    out.labels = Some(solution.clone());
    Ok(out)
}

/// Label values in the fixed order: bus vm, bus va, generator p, generator
/// q, slack p, slack q.
pub fn flatten_prediction(p: &Prediction) -> Vec<f64> {
    let mut v = Vec::with_capacity(2 * (p.state.vm.len() + p.gen_p_mw.len() + 1));
    v.extend(&p.state.vm);
    v.extend(&p.state.va);
    v.extend(&p.gen_p_mw);
    v.extend(&p.gen_q_mvar);
    v.push(p.slack_p_mw);
    v.push(p.slack_q_mvar);
    v
}

pub fn unflatten_prediction(values: &[f64], n_bus: usize, n_gen: usize) -> Result<Prediction> {
    if values.len() != 2 * (n_bus + n_gen + 1) {
        return Err(Error::Dimension(format!(
            "{} values cannot form a prediction for {n_bus} buses and {n_gen} generators",
            values.len()
        )));
    }
    let (vm, rest) = values.split_at(n_bus);
    let (va, rest) = rest.split_at(n_bus);
    let (gp, rest) = rest.split_at(n_gen);
    let (gq, rest) = rest.split_at(n_gen);
    Ok(GridSolution {
        state: crate::powerflow::VoltageState {
            vm: vm.to_vec(),
            va: va.to_vec(),
        },
        gen_p_mw: gp.to_vec(),
        gen_q_mvar: gq.to_vec(),
        slack_p_mw: rest[0],
        slack_q_mvar: rest[1],
    })
}

/// Rebuilds a grid from its embedding. Bus types are inferred (slack bus,
/// buses with a generator, the rest PQ); everything the simulation uses is
/// recovered from the feature tables.
pub fn graph_to_grid(graph: &HeteroGraph, name: &str) -> Result<Grid> {
    graph.check()?;
    let base = graph.base_mva;
    let bus_of = |r: NodeRef| -> Result<usize> {
        graph
            .edges
            .iter()
            .find(|e| e.1 == r)
            .map(|e| graph.table(NodeType::Bus).ids[e.0 .1])
            .ok_or_else(|| Error::Format(format!("{r:?} has no bus")))
    };
    let bus_tab = graph.table(NodeType::Bus);
    let slack_tab = graph.table(NodeType::Slack);
    if slack_tab.len() != 1 {
        return Err(Error::Format(format!("graph has {} slack nodes", slack_tab.len())));
    }
    let slack_bus = bus_of(NodeRef(NodeType::Slack, 0))?;
    let gen_buses: Vec<usize> = (0..graph.count(NodeType::Generator))
        .map(|k| bus_of(NodeRef(NodeType::Generator, k)))
        .collect::<Result<_>>()?;

    let buses: Vec<Bus> = bus_tab
        .ids
        .iter()
        .zip(&bus_tab.rows)
        .map(|(&id, r)| Bus {
            id,
            bus_type: if id == slack_bus {
                BusType::Slack
            } else if gen_buses.contains(&id) {
                BusType::PV
            } else {
                BusType::PQ
            },
            vn_kv: r[0],
            min_vm_pu: r[1],
            max_vm_pu: r[2],
            in_service: r[3] != 0.0,
        })
        .collect();

    let ends = graph.branch_ends();
    let mut branches = Vec::new();
    for t in [NodeType::Line, NodeType::Transformer] {
        let tab = graph.table(t);
        for (k, (&id, r)) in tab.ids.iter().zip(&tab.rows).enumerate() {
            let e = &ends[&NodeRef(t, k)];
            let (f, to) = (e[0], e[1]);
            let br = if t == NodeType::Line {
                Branch {
                    id,
                    from_bus: buses[f].id,
                    to_bus: buses[to].id,
                    r_pu: r[8],
                    x_pu: r[9],
                    b_charging_pu: r[10],
                    tap_ratio: 1.0,
                    shift_rad: 0.0,
                    rate_mva: r[11],
                    in_service: r[7] != 0.0,
                }
            } else {
                Branch {
                    id,
                    from_bus: buses[f].id,
                    to_bus: buses[to].id,
                    r_pu: r[12],
                    x_pu: r[13],
                    b_charging_pu: r[14],
                    tap_ratio: r[10],
                    shift_rad: r[11],
                    rate_mva: r[15],
                    in_service: r[9] != 0.0,
                }
            };
            branches.push(br);
        }
    }
    branches.sort_by_key(|b| b.id);

    let cost = |r: &[f64]| CostCurve {
        a: r[0],
        b: r[1],
        c: r[2],
    };
    let gtab = graph.table(NodeType::Generator);
    let generators = gtab
        .ids
        .iter()
        .zip(&gtab.rows)
        .zip(&gen_buses)
        .map(|((&id, r), &bus)| Generator {
            id,
            bus,
            p_mw: r[0],
            vm_pu: r[1],
            min_p_mw: r[3],
            max_p_mw: r[4],
            min_q_mvar: r[5],
            max_q_mvar: r[6],
            cost: cost(&r[8..11]),
            in_service: r[7] != 0.0,
        })
        .collect();
    let r = &slack_tab.rows[0];
    let slack = Slack {
        bus: slack_bus,
        vm_pu: r[1],
        va_rad: r[0],
        min_p_mw: r[2],
        max_p_mw: r[3],
        min_q_mvar: r[4],
        max_q_mvar: r[5],
        cost: cost(&r[7..10]),
    };
    let ltab = graph.table(NodeType::Load);
    let loads = ltab
        .ids
        .iter()
        .zip(&ltab.rows)
        .enumerate()
        .map(|(k, (&id, r))| {
            Ok(Load {
                id,
                bus: bus_of(NodeRef(NodeType::Load, k))?,
                p_mw: r[0],
                q_mvar: r[5],
                in_service: r[4] != 0.0,
            })
        })
        .collect::<Result<_>>()?;
    let ctab = graph.table(NodeType::Capacitor);
    let shunts = ctab
        .rows
        .iter()
        .enumerate()
        .map(|(k, r)| {
            Ok(Shunt {
                bus: bus_of(NodeRef(NodeType::Capacitor, k))?,
                g_pu: r[0],
                b_pu: r[1],
            })
        })
        .collect::<Result<_>>()?;
    Ok(Grid {
        name: name.to_string(),
        base_mva: base,
        buses,
        branches,
        generators,
        slack,
        loads,
        shunts,
    })
}
