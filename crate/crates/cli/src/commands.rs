use std::path::{Path, PathBuf};

use avmtbf::kinematics::{false_alarm_delta_v, impact_delta_v_standing, min_severe_duration};
use avmtbf::model::{
    human_baseline_mtbf, kappa, render_text, required_error_rate, FailureModelTree, MissionProfile,
    ModelError, ModelResult,
};
use avmtbf::montecarlo::{
    simulate as run_simulation, SimulationConfig, SimulationError, SimulationResult,
};
use avmtbf::perception::{
    error_rate_table, read_log, CountingMode, ErrorRateTable, ErrorType, PerceptionError,
};
use avmtbf::situations::{
    convergence_csv, convergence_report, extract_situation_table, ingest_tracks,
    speed_distribution, Recording, SituationError, SituationTable, SpeedDistribution,
};
use avmtbf::units::{kmh_to_mps, maybe_inf, mps_to_kmh};
use serde::Serialize;
use serde_json::Value;

use crate::config::RunConfig;
use crate::{
    BaselineArgs, CliError, Common, Counting, ErrorKind, ErrorRatesArgs, EstimateArgs, ExtractArgs,
    FalseAlarmChartArgs, Format, RequireArgs, SeverityChartArgs, SimulateArgs, SpeedDistArgs,
};

/// Every JSON output: what it is, the configuration that produced it, and
/// the command-specific body.
#[derive(Serialize)]
struct Document<'a, T: Serialize> {
    kind: &'static str,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn effective_config(common: &Common) -> Result<RunConfig, CliError> {
    let mut c = RunConfig::load(common.config.as_deref())?;
    if let Some(p) = &common.partition {
        c.partition_kmh = p.clone();
    }
    if let Some(v) = common.ttc_limit {
        c.situations.ttc_limit_s = v;
    }
    if let Some(v) = common.mode_threshold {
        c.situations.mode_threshold_mps2 = v;
    }
    if let Some(v) = common.counting {
        c.counting = match v {
            Counting::ErrorFrames => CountingMode::ErrorFrames,
            Counting::ErrorEvents => CountingMode::ErrorEvents,
        };
    }
    if let Some(v) = common.reaction_time {
        c.braking.reaction_time = v;
    }
    if let Some(v) = common.deceleration {
        c.braking.deceleration = v;
    }
    if let Some(v) = common.lead_deceleration {
        c.lead_deceleration_mps2 = v;
    }
    if let Some(v) = common.severe_above {
        c.severity.severe_above_kmh = v;
    }
    c.validate()?;
    Ok(c)
}

fn write_file(path: &Path, content: &str) -> Result<(), CliError> {
    std::fs::write(path, content).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn emit(out: Option<&Path>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => write_file(path, content),
        None => {
            use std::io::Write;
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(content.as_bytes())
                .map_err(|e| CliError::Data(format!("stdout: {e}")))
        }
    }
}

fn json<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("output types serialize");
    s.push('\n');
    s
}

fn emit_document<T: Serialize>(
    common: &Common,
    kind: &'static str,
    config: &RunConfig,
    body: T,
) -> Result<(), CliError> {
    emit(
        common.out.as_deref(),
        &json(&Document { kind, config, body }),
    )
}

/// CSV goes to `--out` unchanged; the configuration lands next to it.
fn emit_csv<T: Serialize>(
    common: &Common,
    kind: &'static str,
    config: &RunConfig,
    grid: T,
    csv: &str,
) -> Result<(), CliError> {
    if let Some(out) = &common.out {
        let mut sidecar = out.clone().into_os_string();
        sidecar.push(".config.json");
        write_file(
            Path::new(&sidecar),
            &json(&Document {
                kind,
                config,
                body: grid,
            }),
        )?;
    }
    emit(common.out.as_deref(), csv)
}

fn required_path(
    flag: Option<PathBuf>,
    fallback: &Option<PathBuf>,
    name: &str,
) -> Result<PathBuf, CliError> {
    flag.or_else(|| fallback.clone()).ok_or_else(|| {
        CliError::Usage(format!(
            "--{name} is required (or inputs.{name} in the config)"
        ))
    })
}

fn situation_error(e: SituationError) -> CliError {
    match e {
        SituationError::Partition(_) | SituationError::Settings(_) => {
            CliError::Usage(e.to_string())
        }
        _ => CliError::Data(e.to_string()),
    }
}

fn perception_error(e: PerceptionError) -> CliError {
    CliError::Data(e.to_string())
}

fn model_error(e: ModelError) -> CliError {
    CliError::Data(e.to_string())
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

/// Accept either a bare payload or one of our documents wrapping it under `key`.
fn payload(mut doc: Value, key: &str) -> Value {
    if doc.get("kind").is_some() {
        if let Some(inner) = doc.get_mut(key) {
            return inner.take();
        }
    }
    doc
}

fn read_situations(path: &Path) -> Result<SituationTable, CliError> {
    let table: SituationTable = serde_json::from_value(payload(read_json(path)?, "table"))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    table
        .validate()
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    Ok(table)
}

fn read_rates(path: &Path) -> Result<ErrorRateTable, CliError> {
    serde_json::from_value(payload(read_json(path)?, "table"))
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn read_tree(path: &Path) -> Result<FailureModelTree, CliError> {
    let tree = payload(read_json(path)?, "tree");
    FailureModelTree::from_json(&tree.to_string())
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

fn load_recordings(
    args_tracks: Option<PathBuf>,
    config: &RunConfig,
) -> Result<(Vec<Recording>, Vec<String>), CliError> {
    let tracks = required_path(args_tracks, &config.inputs.tracks, "tracks")?;
    let recordings = ingest_tracks(&tracks).map_err(situation_error)?;
    let ids = recordings.iter().map(|r| r.id.clone()).collect();
    Ok((recordings, ids))
}

fn write_convergence(
    path: Option<&Path>,
    recordings: &[Recording],
    config: &RunConfig,
) -> Result<(), CliError> {
    if let Some(path) = path {
        let steps =
            convergence_report(recordings, &config.partition()?).map_err(situation_error)?;
        write_file(path, &convergence_csv(&steps))?;
    }
    Ok(())
}

pub fn extract_situations(args: ExtractArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Body<'a> {
        recordings: &'a [String],
        table: &'a SituationTable,
    }
    let config = effective_config(&args.common)?;
    let (recordings, ids) = load_recordings(args.tracks, &config)?;
    let table = extract_situation_table(&recordings, &config.partition()?, &config.situations)
        .map_err(situation_error)?;
    write_convergence(args.convergence.as_deref(), &recordings, &config)?;
    match args.format {
        Format::Json => emit_document(
            &args.common,
            "situation_table",
            &config,
            Body {
                recordings: &ids,
                table: &table,
            },
        ),
        Format::Text => emit(args.common.out.as_deref(), &table.render_text()),
    }
}

pub fn speed_dist(args: SpeedDistArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Body<'a> {
        recordings: &'a [String],
        distribution: &'a SpeedDistribution,
    }
    let config = effective_config(&args.common)?;
    let (recordings, ids) = load_recordings(args.tracks, &config)?;
    let distribution =
        speed_distribution(&recordings, &config.partition()?).map_err(situation_error)?;
    write_convergence(args.convergence.as_deref(), &recordings, &config)?;
    emit_document(
        &args.common,
        "speed_distribution",
        &config,
        Body {
            recordings: &ids,
            distribution: &distribution,
        },
    )
}

pub fn error_rates(args: ErrorRatesArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Body<'a> {
        road_max_speed_kmh: f64,
        table: &'a ErrorRateTable,
    }
    let config = effective_config(&args.common)?;
    let log_path = required_path(args.log, &config.inputs.log, "log")?;
    let meta_path = required_path(args.meta, &config.inputs.log_meta, "meta")?;
    let (log, meta) = read_log(&log_path, &meta_path).map_err(perception_error)?;
    let road_max = args
        .road_max_speed
        .or(config.road_max_speed_kmh)
        .unwrap_or(meta.road_max_speed);
    if !(road_max > 0.0 && road_max.is_finite()) {
        return Err(CliError::Usage(format!(
            "road max speed must be > 0 km/h, got {road_max}"
        )));
    }
    let settings = config.assessment(road_max)?;
    let table = error_rate_table(&log, &config.partition()?, &settings, config.counting)
        .map_err(perception_error)?;
    emit_document(
        &args.common,
        "error_rates",
        &config,
        Body {
            road_max_speed_kmh: road_max,
            table: &table,
        },
    )
}

fn estimate_tree(args: &EstimateArgs, config: &RunConfig) -> Result<FailureModelTree, CliError> {
    let tree_path = args.tree.clone().or_else(|| {
        (args.situations.is_none() && args.rate.is_none())
            .then(|| config.inputs.tree.clone())
            .flatten()
    });
    if let Some(path) = tree_path {
        return read_tree(&path);
    }
    let situations = read_situations(&required_path(
        args.situations.clone(),
        &config.inputs.situations,
        "situations",
    )?)?;
    let profile = match args.rate {
        Some(rate) => {
            if !(rate >= 0.0 && rate.is_finite()) {
                return Err(CliError::Usage(format!(
                    "--rate must be finite and >= 0, got {rate}"
                )));
            }
            let (error_type, p_s) = match args.error_type {
                ErrorKind::Type2 => (ErrorType::TypeII, situations.situation_probabilities()),
                ErrorKind::Type1 => (
                    ErrorType::TypeI,
                    situations.rear_follower_probabilities().ok_or_else(|| {
                        CliError::Data(
                            "situation table has no close-follower probabilities for Type I errors"
                                .into(),
                        )
                    })?,
                ),
            };
            MissionProfile::constant_rate(
                args.profile.clone(),
                1.0,
                situations.partition.clone(),
                &situations.speed_probabilities(),
                &p_s,
                error_type,
                rate,
            )
            .map_err(model_error)?
        }
        None => {
            let rates = read_rates(&required_path(
                args.rates.clone(),
                &config.inputs.rates,
                "rates",
            )?)?;
            let speed_independent = config.speed_independent_rates && !args.per_range_rates;
            MissionProfile::from_tables(
                args.profile.clone(),
                1.0,
                &situations,
                &rates,
                speed_independent,
            )
            .map_err(model_error)?
        }
    };
    FailureModelTree::single(profile).map_err(model_error)
}

pub fn estimate(args: EstimateArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Body<'a> {
        tree: Value,
        result: &'a ModelResult,
    }
    let config = effective_config(&args.common)?;
    let tree = estimate_tree(&args, &config)?;
    let result = tree.evaluate().map_err(model_error)?;
    let text = render_text(&tree, &result);
    if let Some(path) = &args.text {
        write_file(path, &text)?;
    }
    match args.format {
        Format::Text => emit(args.common.out.as_deref(), &text),
        Format::Json => {
            let tree_value: Value =
                serde_json::from_str(&tree.to_json()).expect("tree JSON is valid");
            emit_document(
                &args.common,
                "estimate",
                &config,
                Body {
                    tree: tree_value,
                    result: &result,
                },
            )
        }
    }
}

pub fn require(args: RequireArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Row {
        target_mtbf_hours: f64,
        required_rate_per_hour: f64,
    }
    #[derive(Serialize)]
    struct Body {
        kappa: f64,
        rows: Vec<Row>,
    }
    let config = effective_config(&args.common)?;
    let k = match args.kappa {
        Some(k) => k,
        None => {
            let table = read_situations(&required_path(
                args.situations,
                &config.inputs.situations,
                "situations",
            )?)?;
            kappa(
                &table.speed_probabilities(),
                &table.situation_probabilities(),
            )
            .map_err(model_error)?
        }
    };
    let rows = args
        .targets
        .iter()
        .map(|&target| match required_error_rate(target, k) {
            Ok(rate) => Ok(Row {
                target_mtbf_hours: target,
                required_rate_per_hour: rate,
            }),
            Err(ModelError::Unsatisfiable) => Err(CliError::Data(format!(
                "target {target} h is unsatisfiable: kappa = {k}, no error rate reaches it"
            ))),
            Err(e) => Err(CliError::Usage(e.to_string())),
        })
        .collect::<Result<Vec<_>, _>>()?;
    emit_document(
        &args.common,
        "requirement",
        &config,
        Body { kappa: k, rows },
    )
}

pub fn baseline(args: BaselineArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Body {
        accidents: u64,
        vehicle_km: f64,
        avg_speed_kmh: f64,
        #[serde(with = "maybe_inf")]
        mtbf_hours: f64,
    }
    let config = effective_config(&args.common)?;
    let mtbf = human_baseline_mtbf(args.accidents, args.vehicle_km, args.avg_speed)
        .map_err(|e| CliError::Usage(e.to_string()))?;
    let body = Body {
        accidents: args.accidents,
        vehicle_km: args.vehicle_km,
        avg_speed_kmh: args.avg_speed,
        mtbf_hours: mtbf,
    };
    emit_document(&args.common, "human_baseline", &config, body)
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Body<'a> {
        target: &'static str,
        #[serde(skip_serializing_if = "Option::is_none")]
        lambda_p: Option<f64>,
        #[serde(skip_serializing_if = "Option::is_none")]
        p_s: Option<f64>,
        slices: u64,
        result: &'a SimulationResult,
        z_score: f64,
    }
    let config = effective_config(&args.common)?;
    let (mut sim, target) = match (&args.tree, args.lambda_p, args.p_s) {
        (Some(path), _, _) => (
            SimulationConfig::tree(read_tree(path)?, args.horizon, args.trials, args.seed),
            "tree",
        ),
        (None, Some(rate), Some(p)) => (
            SimulationConfig::leaf(rate, p, args.horizon, args.trials, args.seed),
            "leaf",
        ),
        _ => {
            return Err(CliError::Usage(
                "give either --tree or both --lambda-p and --p-s".into(),
            ))
        }
    };
    if let Some(s) = args.slices {
        sim.slices = s;
    }
    let result = run_simulation(&sim).map_err(|e| match e {
        SimulationError::InvalidConfig(m) => CliError::Usage(m),
        SimulationError::Model(m) => CliError::Data(m.to_string()),
    })?;
    let body = Body {
        target,
        lambda_p: args.lambda_p,
        p_s: args.p_s,
        slices: sim.slices,
        result: &result,
        z_score: result.z_score(),
    };
    emit_document(&args.common, "simulation", &config, body)
}

/// Grid points `min, min + step, …` up to `max`, computed without accumulation.
fn grid(name: &str, min: f64, max: f64, step: f64) -> Result<Vec<f64>, CliError> {
    if !(min.is_finite()
        && max.is_finite()
        && step > 0.0
        && step.is_finite()
        && min >= 0.0
        && max >= min)
    {
        return Err(CliError::Usage(format!(
            "{name} grid needs 0 <= min <= max and step > 0, got {min}..{max} by {step}"
        )));
    }
    let n = ((max - min) / step + 1e-9).floor() as u64;
    if n > 1_000_000 {
        return Err(CliError::Usage(format!(
            "{name} grid has {} points, limit is 1000000",
            n + 1
        )));
    }
    Ok((0..=n).map(|k| min + k as f64 * step).collect())
}

/// Grid coordinates printed without floating-point noise.
fn coord(x: f64) -> String {
    let r = (x * 1e9).round() / 1e9;
    format!("{}", if r == 0.0 { 0.0 } else { r })
}

#[derive(Serialize)]
struct Axis {
    min: f64,
    max: f64,
    step: f64,
}

pub fn severity_chart(args: SeverityChartArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Grid {
        speed_kmh: Axis,
        gap_m: Axis,
    }
    let config = effective_config(&args.common)?;
    let thresholds = config.thresholds()?;
    let speeds = grid("speed", args.speed_min, args.speed_max, args.speed_step)?;
    let gaps = grid("gap", args.gap_min, args.gap_max, args.gap_step)?;
    let mut csv = String::from("speed_kmh,gap_m,delta_v_kmh,severity\n");
    for &v in &speeds {
        for &gap in &gaps {
            let dv = impact_delta_v_standing(kmh_to_mps(v), gap, &config.braking);
            csv.push_str(&format!(
                "{},{},{:.6},{}\n",
                coord(v),
                coord(gap),
                mps_to_kmh(dv),
                thresholds.classify(dv)
            ));
        }
    }
    let axes = Grid {
        speed_kmh: Axis {
            min: args.speed_min,
            max: args.speed_max,
            step: args.speed_step,
        },
        gap_m: Axis {
            min: args.gap_min,
            max: args.gap_max,
            step: args.gap_step,
        },
    };
    emit_csv(&args.common, "severity_chart", &config, axes, &csv)
}

pub fn false_alarm_chart(args: FalseAlarmChartArgs) -> Result<(), CliError> {
    #[derive(Serialize)]
    struct Grid<'a> {
        speeds_kmh: &'a [f64],
        gap_m: Axis,
        duration_s: Axis,
    }
    let config = effective_config(&args.common)?;
    let thresholds = config.thresholds()?;
    let lead = config.lead_braking()?;
    if let Some(v) = args.speeds.iter().find(|v| !(**v > 0.0 && v.is_finite())) {
        return Err(CliError::Usage(format!(
            "--speed must be > 0 km/h, got {v}"
        )));
    }
    let gaps = grid("gap", args.gap_min, args.gap_max, args.gap_step)?;
    let durations = grid(
        "duration",
        args.duration_min,
        args.duration_max,
        args.duration_step,
    )?;
    let mut csv = String::from("speed_kmh,gap_m,duration_s,delta_v_kmh,severity\n");
    let mut boundary = String::from("speed_kmh,gap_m,min_severe_duration_s\n");
    for &v in &args.speeds {
        let speed = kmh_to_mps(v);
        for &gap in &gaps {
            for &d in &durations {
                let dv = false_alarm_delta_v(speed, gap, d, &lead, &config.braking).delta_v();
                csv.push_str(&format!(
                    "{},{},{},{:.6},{}\n",
                    coord(v),
                    coord(gap),
                    coord(d),
                    mps_to_kmh(dv),
                    thresholds.classify(dv)
                ));
            }
            let shortest = min_severe_duration(
                speed,
                gap,
                &lead,
                &config.braking,
                &thresholds,
                args.duration_max,
            )
            .map(|d| format!("{d:.6}"))
            .unwrap_or_default();
            boundary.push_str(&format!("{},{},{shortest}\n", coord(v), coord(gap)));
        }
    }
    if let Some(path) = &args.boundary {
        write_file(path, &boundary)?;
    }
    let axes = Grid {
        speeds_kmh: &args.speeds,
        gap_m: Axis {
            min: args.gap_min,
            max: args.gap_max,
            step: args.gap_step,
        },
        duration_s: Axis {
            min: args.duration_min,
            max: args.duration_max,
            step: args.duration_step,
        },
    };
    emit_csv(&args.common, "false_alarm_chart", &config, axes, &csv)
}
