//! Parallel-versus-serial equivalence sweep.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wbsrc_core::pipeline::run_src_reference;
use wbsrc_core::{
    parallel_to_serial, run_parallel_cic, run_serial_cic, run_src, serial_to_parallel, CicConfig,
    NumericKind, SerialStream, SrcConfig,
};

use crate::commands::write_json;
use crate::config::{RunConfig, VerifyArgs};
use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Mismatch {
    pub index: usize,
    pub expected: i64,
    pub got: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Case {
    Cic {
        lanes: usize,
        stages: u32,
        decimation: u32,
        delay: u32,
    },
    Src {
        factor: u64,
    },
}

#[derive(Debug, Clone, Serialize)]
pub struct CaseResult {
    #[serde(flatten)]
    pub case: Case,
    pub samples: usize,
    pub outputs: usize,
    pub first_mismatch: Option<Mismatch>,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    run: &'a RunConfig,
    passed: usize,
    failed: usize,
    cases: &'a [CaseResult],
}

/// Stream seed for one case, independent of grid order so a single case
/// can be rerun alone.
fn case_seed(seed: u64, case: &Case) -> u64 {
    let tag = match *case {
        Case::Cic {
            lanes,
            stages,
            decimation,
            delay,
        } => (lanes as u64) << 40 | (stages as u64) << 32 | (decimation as u64) << 8 | delay as u64,
        Case::Src { factor } => factor | 1 << 63,
    };
    seed.wrapping_mul(0x9e37_79b9_7f4a_7c15) ^ tag
}

fn random_i16(n: usize, seed: u64, rate_hz: f64) -> SerialStream<i64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    SerialStream::new(
        (0..n).map(|_| rng.gen_range(-32768..=32767)).collect(),
        rate_hz,
    )
}

fn first_mismatch(expected: &[i64], got: &[i64]) -> Option<Mismatch> {
    let n = expected.len().max(got.len());
    (0..n).find_map(|i| {
        let (e, g) = (expected.get(i), got.get(i));
        (e != g).then(|| Mismatch {
            index: i,
            expected: e.copied().unwrap_or(0),
            got: g.copied().unwrap_or(0),
        })
    })
}

fn check_cic(
    case: &Case,
    seed: u64,
    samples: usize,
    fault: Option<usize>,
) -> Result<CaseResult, CliError> {
    let Case::Cic {
        lanes,
        stages,
        decimation,
        delay,
    } = *case
    else {
        unreachable!()
    };
    let cfg = CicConfig::new(stages, decimation, delay, 16, 16)?;
    let x = random_i16(samples, case_seed(seed, case), 1.0);
    let expected = run_serial_cic(&x, &cfg)?.samples;
    let p = serial_to_parallel(&x, lanes)?;
    let mut got = parallel_to_serial(&run_parallel_cic(&p, &cfg)?).samples;
    if let Some(v) = fault.and_then(|i| got.get_mut(i)) {
        *v ^= 1;
    }
    Ok(CaseResult {
        case: case.clone(),
        samples,
        outputs: expected.len(),
        first_mismatch: first_mismatch(&expected, &got),
    })
}

fn check_src(case: &Case, seed: u64, samples: usize) -> Result<CaseResult, CliError> {
    let Case::Src { factor } = *case else {
        unreachable!()
    };
    let cfg = SrcConfig::standard(factor, NumericKind::Fixed)?;
    let x = random_i16(samples, case_seed(seed, case), 20e6);
    let expected = run_src_reference(&x, &cfg)?.samples;
    let got = run_src(&serial_to_parallel(&x, cfg.lanes)?, &cfg)?.samples;
    Ok(CaseResult {
        case: case.clone(),
        samples,
        outputs: expected.len(),
        first_mismatch: first_mismatch(&expected, &got),
    })
}

fn label(case: &Case) -> String {
    match case {
        Case::Cic {
            lanes,
            stages,
            decimation,
            delay,
        } => format!("cic L={lanes} N={stages} R={decimation} M={delay}"),
        Case::Src { factor } => format!("src factor={factor}"),
    }
}

/// Shortest command that reproduces a failure: outputs are causal, so
/// the input can stop right after the sample that feeds the bad output.
fn reproduction(a: &VerifyArgs, r: &CaseResult, m: &Mismatch) -> String {
    let fault = a
        .inject_fault
        .map(|i| format!(" --inject-fault {i}"))
        .unwrap_or_default();
    match r.case {
        Case::Cic {
            lanes,
            stages,
            decimation,
            delay,
        } => format!(
            "wbsrc verify --seed {} --lanes {lanes} --stages {stages} --decimation {decimation} \
             --delay {delay} --samples {} --factors{fault}",
            a.seed,
            (m.index * decimation as usize + 1).min(r.samples)
        ),
        Case::Src { factor } => format!(
            "wbsrc verify --seed {} --lanes --factors {factor} --src-samples {}",
            a.seed, r.samples
        ),
    }
}

pub fn sweep(a: &VerifyArgs) -> Result<Vec<CaseResult>, CliError> {
    let mut results = Vec::new();
    let mut fault = a.inject_fault;
    for &lanes in &a.lanes {
        for &stages in &a.stages {
            for &decimation in &a.decimation {
                for &delay in &a.delay {
                    let case = Case::Cic {
                        lanes,
                        stages,
                        decimation,
                        delay,
                    };
                    results.push(check_cic(&case, a.seed, a.samples, fault.take())?);
                }
            }
        }
    }
    for &factor in &a.factors {
        results.push(check_src(&Case::Src { factor }, a.seed, a.src_samples)?);
    }
    Ok(results)
}

pub fn run(run: &RunConfig, a: &VerifyArgs, out: &Path) -> Result<(), CliError> {
    if a.lanes.contains(&0) {
        return Err(CliError::Usage("lane counts must be positive".into()));
    }
    let results = sweep(a)?;
    let mut first_failure = None;
    for r in &results {
        match &r.first_mismatch {
            None => println!("ok    {} ({} outputs)", label(&r.case), r.outputs),
            Some(m) => {
                println!(
                    "FAIL  {}: first divergent sample index {} (serial {}, parallel {})",
                    label(&r.case),
                    m.index,
                    m.expected,
                    m.got
                );
                println!("      reproduce: {}", reproduction(a, r, m));
                first_failure.get_or_insert((label(&r.case), m.index));
            }
        }
    }
    let failed = results
        .iter()
        .filter(|r| r.first_mismatch.is_some())
        .count();
    let passed = results.len() - failed;
    println!("{passed} passed, {failed} failed (seed {})", a.seed);
    let path = out.join(format!("verify_seed{}.json", a.seed));
    write_json(
        &path,
        &VerifyReport {
            run,
            passed,
            failed,
            cases: &results,
        },
    )?;
    println!("wrote {}", path.display());
    match first_failure {
        None => Ok(()),
        Some((case, index)) => Err(CliError::Verify(format!(
            "{failed} case(s) diverged; first: {case} at sample index {index}"
        ))),
    }
}
