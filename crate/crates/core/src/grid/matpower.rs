//! Reader for the MATPOWER case format (version 2 subset).
//!
//! Supported: `mpc.baseMVA`, `mpc.bus` (13 columns), `mpc.gen` (first 10
//! columns), `mpc.branch` (first 11 of 13 columns), `mpc.gencost` (model 2,
//! at most 3 coefficients). Extra columns are ignored. `%` starts a comment.

use std::collections::HashMap;

use super::{Branch, Bus, BusType, CostCurve, Generator, Grid, Load, Shunt, Slack};
use crate::error::{Error, Result};

struct Row {
    line: usize,
    values: Vec<f64>,
}

struct Table {
    line: usize,
    rows: Vec<Row>,
}

#[derive(Default)]
struct RawCase {
    name: Option<String>,
    scalars: HashMap<String, (usize, f64)>,
    tables: HashMap<String, Table>,
}

fn strip_comment(line: &str) -> &str {
    match line.find('%') {
        Some(pos) => &line[..pos],
        None => line,
    }
}

fn parse_row_values(segment: &str, line: usize, table: &str) -> Result<Vec<f64>> {
    segment
        .split(|c: char| c.is_whitespace() || c == ',')
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<f64>().map_err(|_| {
                Error::parse(line, format!("malformed `{table}` section: `{t}` is not a number"))
            })
        })
        .collect()
}

fn tokenize(text: &str) -> Result<RawCase> {
    let mut raw = RawCase::default();
    // (table name, table) while inside `[ ... ]`
    let mut open: Option<(String, Table)> = None;

    for (lineno, full) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let mut rest = strip_comment(full).trim().to_string();

        if open.is_none() {
            if let Some(fname) = rest.strip_prefix("function") {
                if let Some((_, name)) = fname.split_once('=') {
                    raw.name = Some(name.trim().trim_end_matches(';').to_string());
                }
                continue;
            }
            let Some(assign) = rest.strip_prefix("mpc.") else {
                if !rest.is_empty() {
                    return Err(Error::parse(line_no, format!("unexpected content `{rest}`")));
                }
                continue;
            };
            let Some((key, value)) = assign.split_once('=') else {
                return Err(Error::parse(line_no, format!("expected assignment, found `{rest}`")));
            };
            let key = key.trim().to_string();
            let value = value.trim();
            if let Some(body) = value.strip_prefix('[') {
                if raw.tables.contains_key(&key) {
                    return Err(Error::parse(line_no, format!("section `{key}` defined twice")));
                }
                open = Some((key, Table { line: line_no, rows: Vec::new() }));
                rest = body.to_string();
            } else {
                let value = value.trim_end_matches(';').trim();
                if value.starts_with('\'') || value.starts_with('"') {
                    continue; // version string
                }
                let v = value
                    .parse::<f64>()
                    .map_err(|_| Error::parse(line_no, format!("malformed `{key}` value `{value}`")))?;
                raw.scalars.insert(key, (line_no, v));
                continue;
            }
        }

        let (name, table) = open.as_mut().expect("inside a table");
        let (body, closed) = match rest.find(']') {
            Some(pos) => {
                let tail = rest[pos + 1..].trim().trim_start_matches(';').trim();
                if !tail.is_empty() {
                    return Err(Error::parse(
                        line_no,
                        format!("malformed `{name}` section: trailing `{tail}`"),
                    ));
                }
                (&rest[..pos], true)
            }
            None => (rest.as_str(), false),
        };
        for segment in body.split(';') {
            let values = parse_row_values(segment, line_no, name)?;
            if !values.is_empty() {
                table.rows.push(Row { line: line_no, values });
            }
        }
        if closed {
            let (name, table) = open.take().unwrap();
            raw.tables.insert(name, table);
        }
    }

    if let Some((name, table)) = open {
        return Err(Error::parse(
            table.line,
            format!("malformed `{name}` section: missing closing `];`"),
        ));
    }
    Ok(raw)
}

fn require_table<'a>(raw: &'a RawCase, key: &str, min_cols: usize) -> Result<&'a Table> {
    let table = raw
        .tables
        .get(key)
        .ok_or_else(|| Error::parse(None, format!("missing `mpc.{key}` section")))?;
    for row in &table.rows {
        if row.values.len() < min_cols {
            return Err(Error::parse(
                row.line,
                format!(
                    "malformed `{key}` section: row has {} columns, expected at least {min_cols}",
                    row.values.len()
                ),
            ));
        }
    }
    Ok(table)
}

fn as_id(v: f64, line: usize, what: &str) -> Result<usize> {
    if v.fract() != 0.0 || v < 1.0 {
        return Err(Error::parse(line, format!("{what} `{v}` is not a positive integer")));
    }
    Ok(v as usize)
}

fn parse_cost(row: &Row) -> Result<CostCurve> {
    let v = &row.values;
    if v.len() < 4 {
        return Err(Error::parse(row.line, "malformed `gencost` section: row too short"));
    }
    if v[0] != 2.0 {
        return Err(Error::parse(
            row.line,
            format!("gencost model {} is not supported (only polynomial model 2)", v[0]),
        ));
    }
    let n = v[3] as usize;
    if n > 3 || v[3].fract() != 0.0 {
        return Err(Error::parse(row.line, format!("gencost with {} coefficients is not supported", v[3])));
    }
    if v.len() < 4 + n {
        return Err(Error::parse(row.line, "malformed `gencost` section: missing coefficients"));
    }
    // Highest order first.
    let coeffs: Vec<f64> = v[4..4 + n].iter().rev().copied().collect();
    Ok(CostCurve {
        a: coeffs.first().copied().unwrap_or(0.0),
        b: coeffs.get(1).copied().unwrap_or(0.0),
        c: coeffs.get(2).copied().unwrap_or(0.0),
    })
}

/// Parses MATPOWER case text into a [`Grid`].
///
/// The generator at the type-3 bus becomes the slack unit, bus-table demand
/// becomes [`Load`] records and bus-table shunt columns become [`Shunt`]s.
/// A missing `gencost` section yields zero cost curves.
pub fn parse_matpower_case(text: &str) -> Result<Grid> {
    let raw = tokenize(text)?;
    let base_mva = raw
        .scalars
        .get("baseMVA")
        .map(|&(_, v)| v)
        .ok_or_else(|| Error::parse(None, "missing `mpc.baseMVA`"))?;
    let bus_t = require_table(&raw, "bus", 13)?;
    let gen_t = require_table(&raw, "gen", 10)?;
    let branch_t = require_table(&raw, "branch", 11)?;

    let mut buses = Vec::with_capacity(bus_t.rows.len());
    let mut loads = Vec::new();
    let mut shunts = Vec::new();
    let mut seen = HashMap::new();
    let mut ref_bus: Option<(usize, f64)> = None;
    for row in &bus_t.rows {
        let v = &row.values;
        let id = as_id(v[0], row.line, "bus id")?;
        if seen.insert(id, row.line).is_some() {
            return Err(Error::parse(row.line, format!("duplicate bus id {id}")));
        }
        let (bus_type, in_service) = match v[1] as i64 {
            1 => (BusType::PQ, true),
            2 => (BusType::PV, true),
            3 => (BusType::Slack, true),
            4 => (BusType::PQ, false),
            t => return Err(Error::parse(row.line, format!("unknown bus type {t}"))),
        };
        if bus_type == BusType::Slack {
            if ref_bus.is_some() {
                return Err(Error::parse(row.line, format!("more than one type-3 bus (bus {id})")));
            }
            ref_bus = Some((id, v[8].to_radians()));
        }
        buses.push(Bus {
            id,
            bus_type,
            vn_kv: v[9],
            min_vm_pu: v[12],
            max_vm_pu: v[11],
            in_service,
        });
        if v[2] != 0.0 || v[3] != 0.0 {
            loads.push(Load {
                id: loads.len() + 1,
                bus: id,
                p_mw: v[2],
                q_mvar: v[3],
                in_service,
            });
        }
        if v[4] != 0.0 || v[5] != 0.0 {
            shunts.push(Shunt {
                bus: id,
                g_pu: v[4] / base_mva,
                b_pu: v[5] / base_mva,
            });
        }
    }
    let (ref_id, ref_va) =
        ref_bus.ok_or_else(|| Error::parse(bus_t.line, "no type-3 (reference) bus in `bus` section"))?;

    let costs = match raw.tables.get("gencost") {
        Some(t) => t.rows.iter().map(parse_cost).collect::<Result<Vec<_>>>()?,
        None => Vec::new(),
    };

    let mut generators = Vec::new();
    let mut slack = None;
    for (k, row) in gen_t.rows.iter().enumerate() {
        let v = &row.values;
        let bus = as_id(v[0], row.line, "generator bus")?;
        if !seen.contains_key(&bus) {
            return Err(Error::parse(row.line, format!("generator references unknown bus {bus}")));
        }
        let cost = costs.get(k).copied().unwrap_or_default();
        let in_service = v[7] > 0.0;
        if bus == ref_id && in_service && slack.is_none() {
            slack = Some(Slack {
                bus,
                vm_pu: v[5],
                va_rad: ref_va,
                min_p_mw: v[9],
                max_p_mw: v[8],
                min_q_mvar: v[4],
                max_q_mvar: v[3],
                cost,
            });
            continue;
        }
        generators.push(Generator {
            id: k + 1,
            bus,
            p_mw: v[1],
            vm_pu: v[5],
            min_p_mw: v[9],
            max_p_mw: v[8],
            min_q_mvar: v[4],
            max_q_mvar: v[3],
            cost,
            in_service,
        });
    }
    let slack = slack.ok_or_else(|| {
        Error::parse(gen_t.line, format!("no in-service generator at reference bus {ref_id}"))
    })?;

    let mut branches = Vec::with_capacity(branch_t.rows.len());
    for (k, row) in branch_t.rows.iter().enumerate() {
        let v = &row.values;
        let from_bus = as_id(v[0], row.line, "branch from-bus")?;
        let to_bus = as_id(v[1], row.line, "branch to-bus")?;
        for b in [from_bus, to_bus] {
            if !seen.contains_key(&b) {
                return Err(Error::parse(row.line, format!("branch references unknown bus {b}")));
            }
        }
        branches.push(Branch {
            id: k + 1,
            from_bus,
            to_bus,
            r_pu: v[2],
            x_pu: v[3],
            b_charging_pu: v[4],
            tap_ratio: if v[8] == 0.0 { 1.0 } else { v[8] },
            shift_rad: v[9].to_radians(),
            rate_mva: v[5],
            in_service: v[10] > 0.0,
        });
    }

    let grid = Grid {
        name: raw.name.unwrap_or_else(|| "case".to_string()),
        base_mva,
        buses,
        branches,
        generators,
        slack,
        loads,
        shunts,
    };
    let violations = super::structural_violations(&grid);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(grid)
}
