//! On-disk formats.
//!
//! Trajectories and datasets are record-per-line JSON (`*.traj.jsonl`,
//! `*.data.jsonl`) with a `schema_version` header record; checkpoints are a
//! single JSON document; losses, metric series, and difference curves are
//! CSV. Floats are written in shortest-round-trip decimal form, so
//! `read(write(x))` reproduces `x` bit-exactly for all finite values.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use flock_core::dynamics::{AgentState, FlockState};
use flock_core::metrics::EvalReport;
use flock_core::mpc::Trajectory;
use flock_core::nn::{Activation, FeatureLayout, Mlp, TrainingSample};
use flock_core::quad::QuadState;
use flock_core::Vector;

use crate::config::TaskName;
use crate::{ForgeError, Result};

pub const SCHEMA_VERSION: u32 = 1;

fn parse_err(path: &Path, record: usize, message: impl ToString) -> ForgeError {
    ForgeError::Parse {
        path: path.to_path_buf(),
        record,
        message: message.to_string(),
    }
}

fn check_header(path: &Path, version: u32, kind: &str, expected: &str) -> Result<()> {
    if version != SCHEMA_VERSION {
        return Err(parse_err(
            path,
            1,
            format!("schema_version {version} unsupported (expected {SCHEMA_VERSION})"),
        ));
    }
    if kind != expected {
        return Err(parse_err(
            path,
            1,
            format!("kind {kind:?} is not a {expected}"),
        ));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// Trajectories
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct TrajectoryHeader {
    pub schema_version: u32,
    pub kind: String,
    pub task: TaskName,
    pub dim: usize,
    pub seed: u64,
    pub agents: usize,
    pub control_steps: usize,
    pub has_predator: bool,
    pub has_quad: bool,
}

#[derive(Serialize, Deserialize)]
struct StepRecord {
    /// Dynamics time step of this snapshot.
    k: u64,
    /// Per agent: position components then velocity components.
    agents: Vec<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    predator: Option<Vec<f64>>,
    /// Applied accelerations; absent on the final snapshot.
    #[serde(skip_serializing_if = "Option::is_none")]
    actions: Option<Vec<Vec<f64>>>,
    /// Full 12-component quadrotor states when the plant was a quadrotor.
    #[serde(skip_serializing_if = "Option::is_none")]
    quad: Option<Vec<Vec<f64>>>,
}

/// A trajectory together with its file header and optional quadrotor states.
#[derive(Clone, Debug, PartialEq)]
pub struct StoredTrajectory<const D: usize> {
    pub header: TrajectoryHeader,
    pub trajectory: Trajectory<D>,
    pub quad_states: Option<Vec<Vec<QuadState>>>,
}

fn agent_row<const D: usize>(a: &AgentState<D>) -> Vec<f64> {
    let mut row = Vec::with_capacity(2 * D);
    row.extend_from_slice(a.position.as_slice());
    row.extend_from_slice(a.velocity.as_slice());
    row
}

fn agent_from_row<const D: usize>(row: &[f64]) -> Option<AgentState<D>> {
    if row.len() != 2 * D {
        return None;
    }
    let mut p = Vector::ZERO;
    let mut v = Vector::ZERO;
    for d in 0..D {
        p[d] = row[d];
        v[d] = row[D + d];
    }
    Some(AgentState::new(p, v))
}

fn quad_row(q: &QuadState) -> Vec<f64> {
    let mut row = Vec::with_capacity(12);
    row.extend_from_slice(q.position.as_slice());
    row.extend_from_slice(q.velocity.as_slice());
    row.extend_from_slice(q.angles.as_slice());
    row.extend_from_slice(q.rates.as_slice());
    row
}

fn quad_from_row(row: &[f64]) -> Option<QuadState> {
    if row.len() != 12 {
        return None;
    }
    let take = |o: usize| Vector([row[o], row[o + 1], row[o + 2]]);
    Some(QuadState {
        position: take(0),
        velocity: take(3),
        angles: take(6),
        rates: take(9),
    })
}

pub fn write_trajectory<const D: usize>(
    path: &Path,
    task: TaskName,
    seed: u64,
    trajectory: &Trajectory<D>,
    quad_states: Option<&[Vec<QuadState>]>,
) -> Result<()> {
    let header = TrajectoryHeader {
        schema_version: SCHEMA_VERSION,
        kind: "trajectory".into(),
        task,
        dim: D,
        seed,
        agents: trajectory.agents(),
        control_steps: trajectory.control_steps(),
        has_predator: trajectory.states.first().is_some_and(|s| s.predator.is_some()),
        has_quad: quad_states.is_some(),
    };
    let mut out = BufWriter::new(File::create(path).map_err(ForgeError::io(path))?);
    let io = ForgeError::io(path);
    let write_line = |out: &mut BufWriter<File>, value: &str| {
        out.write_all(value.as_bytes())
            .and_then(|_| out.write_all(b"\n"))
    };
    let mut result = write_line(&mut out, &serde_json::to_string(&header).unwrap());
    for (i, state) in trajectory.states.iter().enumerate() {
        if result.is_err() {
            break;
        }
        let record = StepRecord {
            k: state.time_step,
            agents: state.agents.iter().map(agent_row).collect(),
            predator: state.predator.as_ref().map(agent_row),
            actions: trajectory
                .actions
                .get(i)
                .map(|acts| acts.iter().map(|a| a.as_slice().to_vec()).collect()),
            quad: quad_states.map(|q| q[i].iter().map(quad_row).collect()),
        };
        result = write_line(&mut out, &serde_json::to_string(&record).unwrap());
    }
    result.and_then(|_| out.flush()).map_err(io)?;
    Ok(())
}

/// Reads just the header record of a trajectory file.
pub fn read_trajectory_header(path: &Path) -> Result<TrajectoryHeader> {
    let file = File::open(path).map_err(ForgeError::io(path))?;
    let mut lines = BufReader::new(file).lines();
    let first = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?
        .map_err(ForgeError::io(path))?;
    let header: TrajectoryHeader =
        serde_json::from_str(&first).map_err(|e| parse_err(path, 1, e))?;
    check_header(path, header.schema_version, &header.kind, "trajectory")?;
    Ok(header)
}

pub fn read_trajectory<const D: usize>(path: &Path) -> Result<StoredTrajectory<D>> {
    let file = File::open(path).map_err(ForgeError::io(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let first = first.map_err(ForgeError::io(path))?;
    let header: TrajectoryHeader =
        serde_json::from_str(&first).map_err(|e| parse_err(path, 1, e))?;
    check_header(path, header.schema_version, &header.kind, "trajectory")?;
    if header.dim != D {
        return Err(parse_err(
            path,
            1,
            format!("dimension {} file read as dimension {D}", header.dim),
        ));
    }

    let mut states = Vec::with_capacity(header.control_steps + 1);
    let mut actions = Vec::with_capacity(header.control_steps);
    let mut quad_states = header.has_quad.then(Vec::new);
    for (idx, line) in lines {
        let record_no = idx + 1;
        let line = line.map_err(ForgeError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: StepRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(path, record_no, e))?;
        let agents = record
            .agents
            .iter()
            .map(|row| agent_from_row::<D>(row))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| parse_err(path, record_no, "agent row has wrong width"))?;
        let predator = match &record.predator {
            Some(row) => Some(
                agent_from_row::<D>(row)
                    .ok_or_else(|| parse_err(path, record_no, "predator row has wrong width"))?,
            ),
            None => None,
        };
        states.push(FlockState {
            agents,
            predator,
            time_step: record.k,
        });
        if let Some(acts) = record.actions {
            let mut step = Vec::with_capacity(acts.len());
            for a in &acts {
                if a.len() != D {
                    return Err(parse_err(path, record_no, "action row has wrong width"));
                }
                let mut v = Vector::ZERO;
                for d in 0..D {
                    v[d] = a[d];
                }
                step.push(v);
            }
            actions.push(step);
        }
        if let (Some(log), Some(rows)) = (quad_states.as_mut(), record.quad) {
            let snapshot = rows
                .iter()
                .map(|r| quad_from_row(r))
                .collect::<Option<Vec<_>>>()
                .ok_or_else(|| parse_err(path, record_no, "quad row has wrong width"))?;
            log.push(snapshot);
        }
    }
    if states.len() != actions.len() + 1 {
        return Err(parse_err(
            path,
            states.len() + 1,
            format!(
                "{} snapshots and {} actions do not form a closed trajectory",
                states.len(),
                actions.len()
            ),
        ));
    }
    Ok(StoredTrajectory {
        header,
        trajectory: Trajectory { states, actions },
        quad_states,
    })
}

/// Trajectory files in a directory, sorted by file name.
pub fn list_trajectory_files(dir: &Path) -> Result<Vec<std::path::PathBuf>> {
    let mut paths = Vec::new();
    for entry in std::fs::read_dir(dir).map_err(ForgeError::io(dir))? {
        let entry = entry.map_err(ForgeError::io(dir))?;
        let path = entry.path();
        if path
            .file_name()
            .and_then(|n| n.to_str())
            .is_some_and(|n| n.ends_with(".traj.jsonl"))
        {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths)
}

// ---------------------------------------------------------------------------
// Datasets
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct DatasetHeader {
    pub schema_version: u32,
    pub kind: String,
    pub layout: String,
    pub dim: usize,
    pub feature_width: usize,
    pub label_width: usize,
    /// Seeds of the source trajectories, in trajectory order.
    pub source_seeds: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct SampleRecord {
    /// Source trajectory index (position in `source_seeds`).
    t: usize,
    f: Vec<f64>,
    l: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StoredDataset {
    pub header: DatasetHeader,
    pub layout: FeatureLayout,
    /// (source trajectory index, sample).
    pub samples: Vec<(usize, TrainingSample)>,
}

pub fn write_dataset(
    path: &Path,
    layout: FeatureLayout,
    source_seeds: &[u64],
    per_trajectory: &[Vec<TrainingSample>],
) -> Result<()> {
    let header = DatasetHeader {
        schema_version: SCHEMA_VERSION,
        kind: "dataset".into(),
        layout: layout.tag().into(),
        dim: layout.dim(),
        feature_width: layout.width(),
        label_width: layout.dim(),
        source_seeds: source_seeds.to_vec(),
    };
    let mut out = BufWriter::new(File::create(path).map_err(ForgeError::io(path))?);
    let io = ForgeError::io(path);
    let mut write = |value: String| -> std::io::Result<()> {
        out.write_all(value.as_bytes())?;
        out.write_all(b"\n")
    };
    let mut result = write(serde_json::to_string(&header).unwrap());
    for (t, samples) in per_trajectory.iter().enumerate() {
        for s in samples {
            if result.is_err() {
                break;
            }
            let record = SampleRecord {
                t,
                f: s.features.clone(),
                l: s.label.clone(),
            };
            result = write(serde_json::to_string(&record).unwrap());
        }
    }
    result.map_err(io)?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<StoredDataset> {
    let file = File::open(path).map_err(ForgeError::io(path))?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let (_, first) = lines
        .next()
        .ok_or_else(|| parse_err(path, 1, "empty file"))?;
    let first = first.map_err(ForgeError::io(path))?;
    let header: DatasetHeader =
        serde_json::from_str(&first).map_err(|e| parse_err(path, 1, e))?;
    check_header(path, header.schema_version, &header.kind, "dataset")?;
    let layout = FeatureLayout::from_tag(&header.layout)
        .ok_or_else(|| parse_err(path, 1, format!("unknown layout {:?}", header.layout)))?;
    if header.feature_width != layout.width() || header.label_width != layout.dim() {
        return Err(parse_err(path, 1, "header widths do not match layout"));
    }

    let mut samples = Vec::new();
    for (idx, line) in lines {
        let record_no = idx + 1;
        let line = line.map_err(ForgeError::io(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SampleRecord =
            serde_json::from_str(&line).map_err(|e| parse_err(path, record_no, e))?;
        if record.f.len() != layout.width() || record.l.len() != layout.dim() {
            return Err(parse_err(path, record_no, "sample widths do not match layout"));
        }
        samples.push((
            record.t,
            TrainingSample {
                features: record.f,
                label: record.l,
            },
        ));
    }
    Ok(StoredDataset {
        header,
        layout,
        samples,
    })
}

// ---------------------------------------------------------------------------
// Checkpoints
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct CheckpointLayer {
    weights: Vec<f64>,
    biases: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CheckpointDoc {
    schema_version: u32,
    kind: String,
    layout: String,
    hidden_activation: String,
    widths: Vec<usize>,
    layers: Vec<CheckpointLayer>,
}

fn activation_tag(a: Activation) -> &'static str {
    match a {
        Activation::Sigmoid => "sigmoid",
        Activation::Relu => "relu",
        Activation::Identity => "identity",
    }
}

fn activation_from_tag(tag: &str) -> Option<Activation> {
    match tag {
        "sigmoid" => Some(Activation::Sigmoid),
        "relu" => Some(Activation::Relu),
        "identity" => Some(Activation::Identity),
        _ => None,
    }
}

pub fn write_checkpoint(path: &Path, layout: FeatureLayout, mlp: &Mlp) -> Result<()> {
    let hidden = mlp
        .layers
        .first()
        .map(|l| l.activation)
        .unwrap_or(Activation::Identity);
    let mut widths = vec![mlp.input_width()];
    widths.extend(mlp.layers.iter().map(|l| l.out_width()));
    let doc = CheckpointDoc {
        schema_version: SCHEMA_VERSION,
        kind: "checkpoint".into(),
        layout: layout.tag().into(),
        hidden_activation: activation_tag(hidden).into(),
        widths,
        layers: mlp
            .layers
            .iter()
            .map(|l| CheckpointLayer {
                weights: l.weights.clone(),
                biases: l.biases.clone(),
            })
            .collect(),
    };
    std::fs::write(path, serde_json::to_string(&doc).unwrap()).map_err(ForgeError::io(path))
}

pub fn read_checkpoint(path: &Path) -> Result<(FeatureLayout, Mlp)> {
    let text = std::fs::read_to_string(path).map_err(ForgeError::io(path))?;
    let doc: CheckpointDoc = serde_json::from_str(&text).map_err(|e| parse_err(path, 1, e))?;
    check_header(path, doc.schema_version, &doc.kind, "checkpoint")?;
    let layout = FeatureLayout::from_tag(&doc.layout)
        .ok_or_else(|| parse_err(path, 1, format!("unknown layout {:?}", doc.layout)))?;
    let hidden = activation_from_tag(&doc.hidden_activation)
        .ok_or_else(|| parse_err(path, 1, "unknown activation"))?;
    if doc.widths.len() != doc.layers.len() + 1 {
        return Err(parse_err(path, 1, "widths do not match layer count"));
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (i, layer) in doc.layers.iter().enumerate() {
        let (in_w, out_w) = (doc.widths[i], doc.widths[i + 1]);
        if layer.weights.len() != in_w * out_w || layer.biases.len() != out_w {
            return Err(parse_err(path, 1, format!("layer {i} has wrong shape")));
        }
        layers.push(flock_core::nn::Layer {
            weights: layer.weights.clone(),
            biases: layer.biases.clone(),
            activation: if i + 1 == doc.layers.len() {
                Activation::Identity
            } else {
                hidden
            },
            in_width: in_w,
        });
    }
    let mlp = Mlp { layers };
    if mlp.input_width() != layout.width() || mlp.output_width() != layout.dim() {
        return Err(parse_err(path, 1, "network shape does not match layout"));
    }
    Ok((layout, mlp))
}

// ---------------------------------------------------------------------------
// CSV and report emission
// ---------------------------------------------------------------------------

pub fn write_loss_csv(path: &Path, losses: &[f64]) -> Result<()> {
    let mut out = String::from("epoch,mse\n");
    for (i, loss) in losses.iter().enumerate() {
        out.push_str(&format!("{},{}\n", i + 1, loss));
    }
    std::fs::write(path, out).map_err(ForgeError::io(path))
}

/// One row per control step: the set-averaged diameter and velocity
/// convergence.
pub fn write_series_csv(path: &Path, diameter: &[f64], vc: &[f64]) -> Result<()> {
    let mut out = String::from("step,mean_diameter,mean_velocity_convergence\n");
    for (i, (d, v)) in diameter.iter().zip(vc).enumerate() {
        out.push_str(&format!("{},{},{}\n", i, d, v));
    }
    std::fs::write(path, out).map_err(ForgeError::io(path))
}

/// Difference curves between the point-model and quadrotor plants for both
/// controller families.
pub fn write_delta_csv(
    path: &Path,
    dnc_diameter: &[f64],
    dnc_vc: &[f64],
    cmpc_diameter: &[f64],
    cmpc_vc: &[f64],
) -> Result<()> {
    let mut out = String::from(
        "step,delta_diameter_dnc,delta_velocity_convergence_dnc,delta_diameter_cmpc,delta_velocity_convergence_cmpc\n",
    );
    let len = dnc_diameter
        .len()
        .min(dnc_vc.len())
        .min(cmpc_diameter.len())
        .min(cmpc_vc.len());
    for i in 0..len {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i, dnc_diameter[i], dnc_vc[i], cmpc_diameter[i], cmpc_vc[i]
        ));
    }
    std::fs::write(path, out).map_err(ForgeError::io(path))
}

/// Serializable mirror of the evaluation report.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct EvalReportDto {
    pub runs: usize,
    pub mean_converged_diameter: f64,
    pub sd_converged_diameter: f64,
    pub mean_velocity_convergence: f64,
    pub sd_velocity_convergence: f64,
    pub ic_count: u64,
    pub oc_count: u64,
    pub pc_count: u64,
    pub ic_state_rate: f64,
    pub oc_state_rate: f64,
    pub pc_state_rate: f64,
    pub ic_instance_rate: f64,
    pub oc_instance_rate: f64,
    pub pc_instance_rate: f64,
    pub total_states: u64,
}

impl From<&EvalReport> for EvalReportDto {
    fn from(r: &EvalReport) -> Self {
        let c = &r.collisions;
        EvalReportDto {
            runs: r.runs,
            mean_converged_diameter: r.mean_converged_diameter,
            sd_converged_diameter: r.sd_converged_diameter,
            mean_velocity_convergence: r.mean_velocity_convergence,
            sd_velocity_convergence: r.sd_velocity_convergence,
            ic_count: c.ic_count,
            oc_count: c.oc_count,
            pc_count: c.pc_count,
            ic_state_rate: c.ic_state_rate,
            oc_state_rate: c.oc_state_rate,
            pc_state_rate: c.pc_state_rate,
            ic_instance_rate: c.ic_instance_rate,
            oc_instance_rate: c.oc_instance_rate,
            pc_instance_rate: c.pc_instance_rate,
            total_states: c.total_states,
        }
    }
}

pub fn write_report(dir: &Path, report: &EvalReportDto) -> Result<()> {
    let json_path = dir.join("report.json");
    std::fs::write(
        &json_path,
        serde_json::to_string_pretty(report).unwrap(),
    )
    .map_err(ForgeError::io(&json_path))?;

    let csv_path = dir.join("report.csv");
    let header = "runs,mean_converged_diameter,sd_converged_diameter,mean_velocity_convergence,sd_velocity_convergence,ic_count,ic_state_rate,ic_instance_rate,oc_count,oc_state_rate,oc_instance_rate,pc_count,pc_state_rate,pc_instance_rate,total_states\n";
    let row = format!(
        "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}\n",
        report.runs,
        report.mean_converged_diameter,
        report.sd_converged_diameter,
        report.mean_velocity_convergence,
        report.sd_velocity_convergence,
        report.ic_count,
        report.ic_state_rate,
        report.ic_instance_rate,
        report.oc_count,
        report.oc_state_rate,
        report.oc_instance_rate,
        report.pc_count,
        report.pc_state_rate,
        report.pc_instance_rate,
        report.total_states
    );
    std::fs::write(&csv_path, format!("{header}{row}")).map_err(ForgeError::io(&csv_path))
}

/// Wall-clock decision cost of one controller. Written to `timing.json`,
/// which is the one output excluded from the byte-identical reproducibility
/// contract.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TimingDto {
    pub controller: String,
    pub decisions: u64,
    pub mean_seconds_per_decision: f64,
}

pub fn write_timing(path: &Path, timings: &[TimingDto]) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(timings).unwrap())
        .map_err(ForgeError::io(path))
}
