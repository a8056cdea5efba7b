use std::io::Write;
use std::sync::Arc;

use bfly_core::quadrature::{build_rule, QuadratureCache};
use bfly_core::transform::TransformPlan;
use serde::Serialize;

use crate::args::{OutputFormat, PlanApplyArgs, PlanBuildArgs, PlanCommand, PlanInfoArgs};
use crate::error::{CliError, CliResult};
use crate::format;
use crate::vectors::{format_vector, read_vector, write_vector};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PlanInfo {
    pub m: u32,
    pub n: usize,
    pub parity: String,
    pub epsilon: f64,
    pub block_width: usize,
    pub levels: u32,
    pub leaves: usize,
    pub id_count: usize,
    pub k_max: usize,
    pub k_avg: f64,
    pub k_sigma: f64,
    pub stored_words: usize,
    pub m_max: usize,
    pub t_comp: f64,
}

impl PlanInfo {
    pub fn of(plan: &TransformPlan) -> Self {
        let s = plan.plan().stats();
        PlanInfo {
            m: plan.m(),
            n: plan.n(),
            parity: plan.parity().to_string(),
            epsilon: plan.plan().epsilon(),
            block_width: plan.plan().block_width(),
            levels: s.levels,
            leaves: s.leaves,
            id_count: s.id_count,
            k_max: s.k_max,
            k_avg: s.k_avg,
            k_sigma: s.k_sigma,
            stored_words: s.stored_words,
            m_max: s.peak_words,
            t_comp: s.build_seconds,
        }
    }

    pub fn fields(&self) -> Vec<(&'static str, String)> {
        vec![
            ("m", self.m.to_string()),
            ("n", self.n.to_string()),
            ("parity", self.parity.clone()),
            ("epsilon", format!("{:e}", self.epsilon)),
            ("block_width", self.block_width.to_string()),
            ("levels", self.levels.to_string()),
            ("leaves", self.leaves.to_string()),
            ("id_count", self.id_count.to_string()),
            ("k_max", self.k_max.to_string()),
            ("k_avg", self.k_avg.to_string()),
            ("k_sigma", self.k_sigma.to_string()),
            ("stored_words", self.stored_words.to_string()),
            ("m_max", self.m_max.to_string()),
            ("t_comp", format!("{:e}", self.t_comp)),
        ]
    }
}

pub fn build(args: &PlanBuildArgs) -> CliResult<TransformPlan> {
    args.build.check()?;
    if args.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let parity = args.parity.into();
    let rule = match &args.build.cache_dir {
        Some(dir) => QuadratureCache::with_dir(dir).get(args.m, args.n, parity)?,
        None => Arc::new(build_rule(args.m, args.n, parity)?),
    };
    Ok(TransformPlan::from_rule(
        rule,
        args.build.eps,
        args.build.block_width,
    )?)
}

fn apply(args: &PlanApplyArgs, out: &mut dyn Write) -> CliResult<()> {
    let plan = format::load(&args.plan)?;
    let v = read_vector(&args.input)?;
    let result = if args.inverse {
        plan.inverse(&v)?
    } else {
        plan.forward(&v)?
    };
    match &args.out {
        Some(path) => write_vector(path, &result),
        None => Ok(out.write_all(format_vector(&result).as_bytes())?),
    }
}

fn info(args: &PlanInfoArgs, out: &mut dyn Write) -> CliResult<()> {
    let info = PlanInfo::of(&format::load(&args.plan)?);
    match args.output {
        OutputFormat::Json => {
            serde_json::to_writer_pretty(&mut *out, &info)?;
            writeln!(out)?;
        }
        OutputFormat::Csv => {
            let (keys, values): (Vec<_>, Vec<_>) = info.fields().into_iter().unzip();
            writeln!(out, "{}", keys.join(","))?;
            writeln!(out, "{}", values.join(","))?;
        }
    }
    Ok(())
}

pub fn run_plan(cmd: &PlanCommand, out: &mut dyn Write) -> CliResult<()> {
    match cmd {
        PlanCommand::Build(a) => {
            let plan = build(a)?;
            format::save(&a.out, &plan)?;
            let s = plan.plan().stats();
            writeln!(
                out,
                "wrote {} (n={} m={} {}, k_max {}, {} stored words)",
                a.out.display(),
                plan.n(),
                plan.m(),
                plan.parity(),
                s.k_max,
                s.stored_words
            )?;
            Ok(())
        }
        PlanCommand::Apply(a) => apply(a, out),
        PlanCommand::Info(a) => info(a, out),
    }
}
