use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use wbsrc_core::analysis::{standard_alias_pair, standard_multitone, to_fixed, SpectrumReport};
use wbsrc_core::cic::cic_magnitude_db;
use wbsrc_core::halfband::FixedTaps;
use wbsrc_core::io::{
    read_csv, read_header, read_i16, sidecar_path, write_csv, write_header, write_i16,
    write_xy_csv, SampleFormat, StreamHeader,
};
use wbsrc_core::pipeline::SAMPLE_WIDTH;
use wbsrc_core::{
    alias_attenuation_experiment, cascade_response, design_halfband, gen_multitone,
    multitone_experiment, quantize_coeffs, run_src, run_src_float, serial_to_parallel, CicConfig,
    ExperimentOptions, FactorPlan, HalfbandSpec, NumericKind, ResponseGrid, SerialStream,
    SrcConfig, ToneSpec,
};

use crate::config::{
    Command, DesignArgs, GenerateArgs, ProcessArgs, RespondArgs, RunConfig, Signal, SimulateArgs,
};
use crate::error::CliError;
use crate::verify;

const MULTITONE_HEADROOM_DB: f64 = 1.0;
const FULL_SCALE: f64 = (1u64 << (SAMPLE_WIDTH - 1)) as f64;

pub fn execute(run: &RunConfig) -> Result<(), CliError> {
    let out = run.resolved_out_dir();
    fs::create_dir_all(&out).map_err(|e| CliError::io(&out, e))?;
    match &run.command {
        Command::Design(a) => design(run, a, &out),
        Command::Process(a) => process(run, a, &out),
        Command::Verify(a) => verify::run(run, a, &out),
        Command::Respond(a) => respond(run, a, &out),
        Command::Simulate(a) => simulate(run, a, &out),
        Command::Generate(a) => generate(a),
    }
}

pub(crate) fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("report serialises");
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}

#[derive(Serialize)]
struct Report<'a, T> {
    run: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

fn report<T: Serialize>(path: &Path, run: &RunConfig, body: T) -> Result<(), CliError> {
    write_json(path, &Report { run, body })?;
    println!("wrote {}", path.display());
    Ok(())
}

fn design(run: &RunConfig, a: &DesignArgs, out: &Path) -> Result<(), CliError> {
    match &a.cic {
        Some(kv) => design_cic(run, a, kv, out),
        None => design_halfband_stage(run, a, out),
    }
}

fn parse_cic(kv: &[String], bits: u32) -> Result<CicConfig, CliError> {
    let (mut n, mut r, mut m) = (5u32, 20u32, 1u32);
    for item in kv {
        let (k, v) = item
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("expected KEY=VALUE, got `{item}`")))?;
        let v: u32 = v
            .parse()
            .map_err(|_| CliError::Usage(format!("bad value in `{item}`")))?;
        match k {
            "N" | "n" => n = v,
            "R" | "r" => r = v,
            "M" | "m" => m = v,
            _ => {
                return Err(CliError::Usage(format!(
                    "unknown CIC key `{k}` (use N, R, M)"
                )))
            }
        }
    }
    Ok(CicConfig::new(n, r, m, bits, bits)?)
}

#[derive(Serialize)]
struct CicSummary {
    config: CicConfig,
    internal_width: u32,
    bit_growth: u32,
    dc_gain: i128,
    input_rate_hz: f64,
    response_csv: PathBuf,
}

fn design_cic(run: &RunConfig, a: &DesignArgs, kv: &[String], out: &Path) -> Result<(), CliError> {
    let cfg = parse_cic(kv, a.bits)?;
    println!(
        "CIC N={} R={} M={}: {}-bit in/out, internal width {} bits (growth {}), DC gain {}",
        cfg.stages,
        cfg.decimation,
        cfg.diff_delay,
        cfg.input_width,
        cfg.internal_width(),
        cfg.bit_growth(),
        cfg.dc_gain()
    );
    let stem = format!(
        "cic_n{}_r{}_m{}",
        cfg.stages, cfg.decimation, cfg.diff_delay
    );
    let csv = out.join(format!("{stem}_response.csv"));
    let points = 4001;
    let rows: Vec<(f64, f64)> = (0..points)
        .map(|i| {
            let f = 0.5 * i as f64 / (points - 1) as f64;
            (f * a.rate, cic_magnitude_db(&cfg, f))
        })
        .collect();
    write_xy_csv(&csv, "frequency_hz,magnitude_db", &rows)?;
    println!("wrote {}", csv.display());
    report(
        &out.join(format!("{stem}.json")),
        run,
        CicSummary {
            config: cfg,
            internal_width: cfg.internal_width(),
            bit_growth: cfg.bit_growth(),
            dc_gain: cfg.dc_gain(),
            input_rate_hz: a.rate,
            response_csv: csv,
        },
    )
}

#[derive(Serialize)]
struct Measured {
    stopband_atten_db: f64,
    passband_ripple_db: f64,
}

#[derive(Serialize)]
struct HalfbandSummary {
    order: usize,
    taps: usize,
    transition_width: f64,
    target_atten_db: f64,
    width: u32,
    scale: f64,
    float: Measured,
    quantized: Measured,
    fixed: FixedTaps,
}

fn design_halfband_stage(run: &RunConfig, a: &DesignArgs, out: &Path) -> Result<(), CliError> {
    let order = a.hb_order.unwrap_or(122);
    let order = usize::try_from(order).map_err(|_| CliError::Usage("order too large".into()))?;
    let spec = HalfbandSpec::from_order(order, a.transition, a.atten, a.bits)?;
    let c = design_halfband(&spec)?;
    let q = quantize_coeffs(&c, a.bits)?;
    let fixed = q.fixed.clone().expect("quantized");
    println!(
        "halfband order {order} ({} taps): float {:.2} dB stopband, {:.4} dB ripple; \
         {}-bit {:.2} dB stopband, {:.4} dB ripple",
        spec.tap_count(),
        c.stopband_atten_db,
        c.passband_ripple_db,
        a.bits,
        q.stopband_atten_db,
        q.passband_ripple_db
    );
    let csv = out.join(format!("hb{order}.csv"));
    write_csv(&csv, &c.h)?;
    println!("wrote {}", csv.display());
    report(
        &sidecar_path(&csv),
        run,
        HalfbandSummary {
            order,
            taps: spec.tap_count(),
            transition_width: spec.transition_width,
            target_atten_db: spec.stopband_atten_db,
            width: a.bits,
            scale: (1u64 << fixed.frac_bits) as f64,
            float: Measured {
                stopband_atten_db: c.stopband_atten_db,
                passband_ripple_db: c.passband_ripple_db,
            },
            quantized: Measured {
                stopband_atten_db: q.stopband_atten_db,
                passband_ripple_db: q.passband_ripple_db,
            },
            fixed,
        },
    )
}

enum Samples {
    Int(Vec<i64>),
    Real(Vec<f64>),
}

impl Samples {
    fn len(&self) -> usize {
        match self {
            Samples::Int(v) => v.len(),
            Samples::Real(v) => v.len(),
        }
    }
}

fn read_samples(path: &Path) -> Result<(Samples, Option<StreamHeader>), CliError> {
    let format = SampleFormat::from_path(path)?;
    let header = if sidecar_path(path).exists() {
        Some(read_header(path)?)
    } else {
        None
    };
    let samples = match format {
        SampleFormat::I16 => Samples::Int(read_i16(path)?),
        SampleFormat::Csv => Samples::Real(read_csv(path)?),
    };
    Ok((samples, header))
}

/// Integer samples are full-scale i16 values; real samples are relative
/// to full scale.
fn write_samples(path: &Path, s: &Samples, rate_hz: f64) -> Result<(), CliError> {
    let format = SampleFormat::from_path(path)?;
    match (format, s) {
        (SampleFormat::I16, Samples::Int(v)) => write_i16(path, v)?,
        (SampleFormat::I16, Samples::Real(v)) => {
            let ints: Vec<i64> = v
                .iter()
                .map(|x| (x * FULL_SCALE + 0.5).floor() as i64)
                .collect();
            write_i16(path, &ints)?
        }
        (SampleFormat::Csv, Samples::Real(v)) => write_csv(path, v)?,
        (SampleFormat::Csv, Samples::Int(v)) => {
            let reals: Vec<f64> = v.iter().map(|&x| x as f64 / FULL_SCALE).collect();
            write_csv(path, &reals)?
        }
    }
    write_header(
        path,
        &StreamHeader {
            sample_rate_hz: rate_hz,
            lanes: 1,
            format,
            count: Some(s.len()),
        },
    )?;
    Ok(())
}

#[derive(Serialize)]
struct ProcessSummary {
    input: PathBuf,
    output: PathBuf,
    numeric: NumericKind,
    plan: FactorPlan,
    lanes: usize,
    input_samples: usize,
    output_samples: usize,
    input_rate_hz: f64,
    output_rate_hz: f64,
}

fn process(run: &RunConfig, a: &ProcessArgs, out: &Path) -> Result<(), CliError> {
    let input = a
        .input
        .as_ref()
        .ok_or_else(|| CliError::Usage("process needs --input".into()))?;
    let numeric = NumericKind::from(a.numeric);
    let cfg = SrcConfig::standard(a.factor, numeric)?;
    let output = match &a.output {
        Some(p) => p.clone(),
        None => {
            let stem = input.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
            let ext = input.extension().and_then(|s| s.to_str()).unwrap_or("i16");
            out.join(format!("{stem}_x{}.{ext}", a.factor))
        }
    };
    SampleFormat::from_path(&output)?;

    let (samples, header) = read_samples(input)?;
    let rate = a
        .rate
        .or(header.map(|h| h.sample_rate_hz))
        .unwrap_or(wbsrc_core::analysis::DESK_RATE_HZ);
    let n = samples.len();
    let result = match (numeric, samples) {
        (NumericKind::Fixed, s) => {
            let ints = match s {
                Samples::Int(v) => v,
                Samples::Real(v) => {
                    to_fixed(&SerialStream::new(v, rate), SAMPLE_WIDTH, None)?
                        .0
                        .samples
                }
            };
            let p = serial_to_parallel(&SerialStream::new(ints, rate), cfg.lanes)?;
            Samples::Int(run_src(&p, &cfg)?.samples)
        }
        (NumericKind::Float, s) => {
            let reals = match s {
                Samples::Real(v) => v,
                Samples::Int(v) => v.iter().map(|&x| x as f64 / FULL_SCALE).collect(),
            };
            Samples::Real(run_src_float(&SerialStream::new(reals, rate), &cfg)?.samples)
        }
    };
    let out_rate = rate / cfg.total_factor() as f64;
    write_samples(&output, &result, out_rate)?;
    println!(
        "factor {} ({}): {} samples at {} Hz -> {} samples at {} Hz, wrote {}",
        a.factor,
        describe_plan(&cfg.plan),
        n,
        rate,
        result.len(),
        out_rate,
        output.display()
    );
    let mut report_path = output.clone().into_os_string();
    report_path.push(".report.json");
    report(
        Path::new(&report_path),
        run,
        ProcessSummary {
            input: input.clone(),
            output,
            numeric,
            plan: cfg.plan,
            lanes: cfg.lanes,
            input_samples: n,
            output_samples: result.len(),
            input_rate_hz: rate,
            output_rate_hz: out_rate,
        },
    )
}

fn describe_plan(p: &FactorPlan) -> String {
    format!(
        "{} parallel x {} serial CIC x 2^{} halfband",
        p.parallel_factor, p.serial_cic_r, p.serial_hb_stages
    )
}

#[derive(Serialize)]
struct RespondSummary {
    input_rate_hz: f64,
    output_rate_hz: f64,
    plan: FactorPlan,
    #[serde(flatten)]
    report: wbsrc_core::ResponseReport,
    response_csv: PathBuf,
}

fn respond(run: &RunConfig, a: &RespondArgs, out: &Path) -> Result<(), CliError> {
    let cfg = SrcConfig::standard(a.factor, a.numeric.into())?;
    let grid = ResponseGrid {
        band_points: a.band_points,
        display_points: a.display_points,
        ..ResponseGrid::default()
    };
    let start = Instant::now();
    let r = cascade_response(&cfg, &grid);
    let elapsed = start.elapsed();
    println!(
        "factor {} ({}): passband ripple {:.4} dB, stopband attenuation {:.2} dB \
         (worst alias at {:.1} Hz), {:.2} s",
        a.factor,
        describe_plan(&cfg.plan),
        r.passband_ripple_db,
        r.stopband_atten_db,
        r.worst_alias_freq * a.rate,
        elapsed.as_secs_f64()
    );
    let csv = out.join(format!("response_x{}.csv", a.factor));
    let rows: Vec<(f64, f64)> = r.response.iter().map(|&(f, db)| (f * a.rate, db)).collect();
    write_xy_csv(&csv, "frequency_hz,magnitude_db", &rows)?;
    println!("wrote {}", csv.display());
    report(
        &out.join(format!("response_x{}.json", a.factor)),
        run,
        RespondSummary {
            input_rate_hz: a.rate,
            output_rate_hz: a.rate / a.factor as f64,
            plan: cfg.plan,
            report: r,
            response_csv: csv,
        },
    )
}

fn write_spectrum(path: &Path, s: &Option<SpectrumReport>) -> Result<(), CliError> {
    let Some(s) = s else { return Ok(()) };
    let rows: Vec<(f64, f64)> = s
        .freqs_hz
        .iter()
        .copied()
        .zip(s.power_db.iter().copied())
        .collect();
    write_xy_csv(path, "frequency_hz,power_dbfs", &rows)?;
    println!("wrote {}", path.display());
    Ok(())
}

fn simulate(run: &RunConfig, a: &SimulateArgs, out: &Path) -> Result<(), CliError> {
    let cfg = SrcConfig::standard(a.factor, a.numeric.into())?;
    let opts = ExperimentOptions {
        input_rate_hz: a.rate,
        fft_size: a.fft_size,
        headroom_db: a.headroom_db,
    };
    let both = !a.antialias && !a.multitone;
    if a.antialias || both {
        let (d, x) = standard_alias_pair();
        let desired = ToneSpec::new(a.desired_hz, d.amplitude);
        let alias = ToneSpec::new(a.alias_hz, x.amplitude);
        let r = alias_attenuation_experiment(&cfg, desired, alias, &opts)?;
        println!(
            "anti-aliasing, factor {}: {} Hz tone folds to {:.1} Hz, rejected by {:.2} dB \
             (response predicts {:.2} dB)",
            a.factor,
            a.alias_hz,
            r.alias_folded_hz,
            r.measured_rejection_db,
            r.predicted_rejection_db
        );
        let stem = format!("antialias_x{}", a.factor);
        write_spectrum(&out.join(format!("{stem}_spectrum.csv")), &r.spectrum)?;
        report(&out.join(format!("{stem}.json")), run, &r)?;
    }
    if a.multitone || both {
        let tones: Vec<ToneSpec> = standard_multitone()
            .into_iter()
            .map(|t| ToneSpec {
                frequency_hz: t.frequency_hz * a.rate / wbsrc_core::analysis::DESK_RATE_HZ,
                ..t
            })
            .collect();
        // eight unit tones sum past full scale
        let opts = ExperimentOptions {
            headroom_db: a.headroom_db.or(Some(MULTITONE_HEADROOM_DB)),
            ..opts
        };
        let r = multitone_experiment(&cfg, &tones, &opts)?;
        for t in &r.tones {
            println!("  tone {:>10.1} Hz: {:+.4} dB", t.frequency_hz, t.error_db);
        }
        println!(
            "multitone, factor {}: worst amplitude error {:.4} dB",
            a.factor, r.max_abs_error_db
        );
        let stem = format!("multitone_x{}", a.factor);
        write_spectrum(&out.join(format!("{stem}_spectrum.csv")), &r.spectrum)?;
        report(&out.join(format!("{stem}.json")), run, &r)?;
    }
    Ok(())
}

fn generate(a: &GenerateArgs) -> Result<(), CliError> {
    let output = a
        .output
        .as_ref()
        .ok_or_else(|| CliError::Usage("generate needs --output".into()))?;
    let format = SampleFormat::from_path(output)?;
    let scale = a.rate / wbsrc_core::analysis::DESK_RATE_HZ;
    let tones: Vec<ToneSpec> = match a.signal {
        Signal::Multitone => standard_multitone(),
        Signal::Alias => {
            let (d, x) = standard_alias_pair();
            vec![d, x]
        }
    }
    .into_iter()
    .map(|t| ToneSpec {
        frequency_hz: t.frequency_hz * scale,
        ..t
    })
    .collect();
    let x = gen_multitone(&tones, a.rate, a.count)?;
    let (q, _) = to_fixed(&x, SAMPLE_WIDTH, Some(a.headroom_db))?;
    let samples = match format {
        SampleFormat::I16 => Samples::Int(q.samples),
        SampleFormat::Csv => {
            Samples::Real(q.samples.iter().map(|&v| v as f64 / FULL_SCALE).collect())
        }
    };
    write_samples(output, &samples, a.rate)?;
    println!("wrote {} samples to {}", a.count, output.display());
    Ok(())
}
