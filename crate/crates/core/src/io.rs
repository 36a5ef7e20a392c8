//! CSV persistence for value functions, argmax sets, policies, kernels and
//! trajectories.
//!
//! Values are written with 17 significant digits so they read back bit-exact.
//! Rows are emitted in a fixed order (stage ascending, then state index), and
//! the sink never appears except as a trajectory state, where its coordinate
//! cells are left empty.

use std::io::{Read, Write};

use crate::dp::{ArgmaxPolicy, ValueFunction, ValueSlice};
use crate::error::{Error, Result};
use crate::kernel::{FeedbackPolicy, KernelSlice};
use crate::mc::Trajectory;
use crate::model::Model;

/// 17 significant digits.
pub fn fmt_value(v: f64) -> String {
    format!("{v:.16e}")
}

fn fmt_coords(coords: Option<&[f64]>, dim: usize) -> impl Iterator<Item = String> + '_ {
    (0..dim).map(move |k| coords.map_or(String::new(), |c| c[k].to_string()))
}

fn header(lead: &[&str], prefix: char, dim: usize, tail: &[&str]) -> Vec<String> {
    lead.iter()
        .map(|s| s.to_string())
        .chain((1..=dim).map(|k| format!("{prefix}{k}")))
        .chain(tail.iter().map(|s| s.to_string()))
        .collect()
}

fn parse_cell<T: std::str::FromStr>(record: &csv::StringRecord, i: usize, what: &str) -> Result<T> {
    let line = record.position().map_or(0, |p| p.line());
    let cell = record
        .get(i)
        .ok_or_else(|| Error::Format(format!("line {line}: missing column `{what}`")))?;
    cell.trim()
        .parse()
        .map_err(|_| Error::Format(format!("line {line}: bad `{what}` value `{cell}`")))
}

pub fn write_value_csv<W: Write>(out: W, model: &Model, valuefn: &ValueFunction) -> Result<()> {
    let dim = model.states().dim;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&["t", "state_index"], 'x', dim, &["value"]))?;
    for slice in valuefn.slices() {
        for x in 0..model.n_states() {
            let mut row = vec![slice.stage.to_string(), x.to_string()];
            row.extend(fmt_coords(model.coords(x), dim));
            row.push(fmt_value(slice.values[x]));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// A value table read back from CSV together with the state coordinates it
/// lists.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub valuefn: ValueFunction,
    pub points: Vec<Vec<f64>>,
}

pub fn read_value_csv<R: Read>(input: R) -> Result<ValueTable> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers()?.clone();
    let ncols = headers.len();
    if ncols < 4
        || &headers[0] != "t"
        || &headers[1] != "state_index"
        || &headers[ncols - 1] != "value"
    {
        return Err(Error::Format(
            "value CSV header must be `t,state_index,x1..xn,value`".into(),
        ));
    }
    let dim = ncols - 3;
    let mut slices: Vec<ValueSlice> = Vec::new();
    let mut points: Vec<Vec<f64>> = Vec::new();
    for record in r.records() {
        let record = record?;
        let t: i64 = parse_cell(&record, 0, "t")?;
        let x: usize = parse_cell(&record, 1, "state_index")?;
        let coords = (0..dim)
            .map(|k| parse_cell(&record, 2 + k, "coordinate"))
            .collect::<Result<Vec<f64>>>()?;
        let v: f64 = parse_cell(&record, ncols - 1, "value")?;
        if slices.last().is_none_or(|s| s.stage != t) {
            slices.push(ValueSlice {
                stage: t,
                values: Vec::new(),
            });
        }
        let first_stage = slices.len() == 1;
        let slice = slices.last_mut().expect("just pushed");
        if x != slice.values.len() {
            return Err(Error::Format(format!(
                "stage {t}: expected state_index {}, found {x}",
                slice.values.len()
            )));
        }
        if first_stage {
            points.push(coords);
        } else if points.get(x) != Some(&coords) {
            return Err(Error::Format(format!(
                "stage {t}: coordinates of state {x} differ from the first stage"
            )));
        }
        slice.values.push(v);
    }
    for s in &mut slices {
        s.values.push(0.0); // sink
    }
    Ok(ValueTable {
        valuefn: ValueFunction::from_slices(slices)?,
        points,
    })
}

fn control_row(model: &Model, t: i64, x: usize, u: usize, dim: usize) -> Vec<String> {
    let mut row = vec![t.to_string(), x.to_string(), u.to_string()];
    row.extend(fmt_coords(Some(&model.controls(t, x)[u]), dim));
    row
}

/// One row per member of each argmax set.
pub fn write_argmax_csv<W: Write>(out: W, model: &Model, argmax: &ArgmaxPolicy) -> Result<()> {
    let dim = model.def().control_dim();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(
        &["t", "state_index", "control_index"],
        'u',
        dim,
        &[],
    ))?;
    for t in model.t0()..model.horizon() {
        for x in 0..model.n_states() {
            for &u in argmax.viable(t, x) {
                w.write_record(control_row(model, t, x, u, dim))?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_argmax_csv<R: Read>(input: R, model: &Model) -> Result<ArgmaxPolicy> {
    let mut sets = vec![vec![Vec::new(); model.n_states() + 1]; model.time().steps()];
    let mut r = csv::Reader::from_reader(input);
    for record in r.records() {
        let record = record?;
        let t: i64 = parse_cell(&record, 0, "t")?;
        let x: usize = parse_cell(&record, 1, "state_index")?;
        let u: usize = parse_cell(&record, 2, "control_index")?;
        if t < model.t0() || t >= model.horizon() || x >= model.n_states() {
            return Err(Error::Format(format!(
                "argmax row ({t}, {x}) outside the model"
            )));
        }
        if u >= model.n_controls(t, x) {
            return Err(Error::InadmissibleControl { t, x, control: u });
        }
        sets[(t - model.t0()) as usize][x].push(u);
    }
    Ok(ArgmaxPolicy::from_sets(model.t0(), sets))
}

pub fn write_policy_csv<W: Write>(out: W, model: &Model, policy: &FeedbackPolicy) -> Result<()> {
    let dim = model.def().control_dim();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(
        &["t", "state_index", "control_index"],
        'u',
        dim,
        &[],
    ))?;
    for t in model.t0()..model.horizon() {
        for x in 0..model.n_states() {
            w.write_record(control_row(model, t, x, policy.choose(t, x), dim))?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Kernel rows; `points` are the grid coordinates.
pub fn write_kernel_csv<W: Write>(out: W, points: &[Vec<f64>], kernel: &KernelSlice) -> Result<()> {
    let dim = points.first().map_or(0, Vec::len);
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(&["t", "beta", "state_index"], 'x', dim, &[]))?;
    for &x in &kernel.members {
        let mut row = vec![
            kernel.stage.to_string(),
            kernel.beta.to_string(),
            x.to_string(),
        ];
        row.extend(fmt_coords(Some(&points[x]), dim));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Long format: one row per sample and stage. The control cell is empty at
/// the final stage.
pub fn write_trajectories_csv<W: Write>(out: W, model: &Model, paths: &[Trajectory]) -> Result<()> {
    let dim = model.states().dim;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(
        &["sample", "t", "state_index"],
        'x',
        dim,
        &["control_index", "success"],
    ))?;
    for (i, tr) in paths.iter().enumerate() {
        for (k, &x) in tr.states.iter().enumerate() {
            let mut row = vec![
                i.to_string(),
                (model.t0() + k as i64).to_string(),
                x.to_string(),
            ];
            row.extend(fmt_coords(model.coords(x), dim));
            row.push(
                tr.controls
                    .get(k)
                    .map_or(String::new(), ToString::to_string),
            );
            row.push(u8::from(tr.success).to_string());
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Wide format for plotting: `t,path_0,...`, first state coordinate per
/// sample, empty once a path has left the grid.
pub fn write_plot_csv<W: Write>(out: W, model: &Model, paths: &[Trajectory]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let mut head = vec!["t".to_string()];
    head.extend((0..paths.len()).map(|i| format!("path_{i}")));
    w.write_record(&head)?;
    for k in 0..=model.time().steps() {
        let mut row = vec![(model.t0() + k as i64).to_string()];
        row.extend(paths.iter().map(|tr| {
            model
                .coords(tr.states[k])
                .map_or(String::new(), |c| c[0].to_string())
        }));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
