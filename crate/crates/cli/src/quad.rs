use std::io::Write;

use bfly_core::quadrature::{build_rule, QuadratureCache};

use crate::args::QuadArgs;
use crate::error::{CliError, CliResult};

/// Writes `index,node,weight` rows; the odd chain adds a `center` row.
pub fn run_quad(args: &QuadArgs, out: &mut dyn Write) -> CliResult<()> {
    if args.n == 0 {
        return Err(CliError::Usage("--n must be positive".into()));
    }
    let parity = args.parity.into();
    let rule = match &args.cache_dir {
        Some(dir) => QuadratureCache::with_dir(dir).get(args.m, args.n, parity)?,
        None => build_rule(args.m, args.n, parity)?.into(),
    };
    writeln!(out, "index,node,weight")?;
    for (i, (x, w)) in rule.nodes.iter().zip(&rule.weights).enumerate() {
        writeln!(out, "{i},{x:e},{w:e}")?;
    }
    if let Some(c) = rule.center_weight {
        writeln!(out, "center,0e0,{c:e}")?;
    }
    Ok(())
}
