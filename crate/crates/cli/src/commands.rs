use crate::{
    BudgetArgs, Corruption, DecodeArgs, DesignArgs, HeatmapArgs, PoolsArgs, SimulateArgs, VerifyArgs,
};
use anyhow::{anyhow, Context};
use pooldesign::design::verify_disjunct;
use pooldesign::formats::{self, DecodeReport, FormatError};
use pooldesign::simulation::{range_grid, PhaseConfig};
use pooldesign::*;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INVALID_PARAMS: u8 = 2;
pub const EXIT_INVARIANT: u8 = 3;
pub const EXIT_DIMENSION: u8 = 4;

pub struct CliError {
    pub code: u8,
    pub error: anyhow::Error,
}

impl<E: Into<anyhow::Error>> From<E> for CliError {
    fn from(e: E) -> Self {
        Self { code: EXIT_FAILURE, error: e.into() }
    }
}

trait WithCode<T> {
    fn code(self, code: u8) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> WithCode<T> for Result<T, E> {
    fn code(self, code: u8) -> Result<T, CliError> {
        self.map_err(|e| CliError { code, error: e.into() })
    }
}

type CliResult = Result<(), CliError>;

/// Caps rayon's pool with `POOLDESIGN_THREADS` when set.
pub fn configure_threads() {
    if let Some(n) = std::env::var("POOLDESIGN_THREADS").ok().and_then(|v| v.parse::<usize>().ok()) {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
        }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("cannot create {}", path.display()))?))
}

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("cannot open {}", path.display()))?))
}

fn load_design(path: &Path) -> Result<PoolingDesign, CliError> {
    let reader = open(path)?;
    formats::read_design(reader).map_err(|e| {
        let code = match e {
            FormatError::Design(_) => EXIT_INVALID_PARAMS,
            _ => EXIT_FAILURE,
        };
        CliError { code, error: anyhow::Error::new(e).context(format!("reading {}", path.display())) }
    })
}

pub fn design(args: DesignArgs) -> CliResult {
    let params = match (args.q, args.s, args.people, args.prevalence) {
        (Some(q), Some(s), None, None) => DesignParams::new(q, s).code(EXIT_INVALID_PARAMS)?,
        (None, None, Some(people), Some(p)) => plan_for_population(people, p).code(EXIT_INVALID_PARAMS)?,
        _ => {
            return Err(anyhow!("give either --q and --s, or --people and --prevalence")).code(EXIT_INVALID_PARAMS)
        }
    };
    let design = construct_design(params);
    let mut out = create(&args.out)?;
    formats::write_design(&design, &mut out)?;
    out.flush()?;
    println!("q={}", params.q());
    println!("s={}", params.s());
    println!("m={}", design.m());
    println!("n={}", design.n());
    println!("tests_per_individual={}", params.tests_per_individual());
    Ok(())
}

pub fn verify(args: VerifyArgs) -> CliResult {
    let design = load_design(&args.design)?;
    let report = design.structure();
    let p = design.params();
    println!("q={}", p.q());
    println!("s={}", p.s());
    println!("m={}", design.m());
    println!("n={}", design.n());
    println!("ones={} (expected {})", report.ones, report.expected_ones);
    let (cmin, cmax) = report.column_weight_range;
    let (rmin, rmax) = report.row_weight_range;
    println!("column_weight={cmin}..{cmax} (expected {})", report.expected_column_weight);
    println!("row_weight={rmin}..{rmax} (expected {})", report.expected_row_weight);
    println!("lambda={}", report.lambda);
    let mut ok = report.is_valid();
    match design.certificate() {
        Ok(c) => {
            println!("rho={}", c.rho);
            println!("tau={}", c.tau);
            println!("pinv_norm={}", c.pinv_norm);
            println!("bound_constant={}", c.bound_constant);
        }
        Err(e @ DesignError::NumericalFailure(_)) => return Err(e.into()),
        Err(e) => {
            println!("certificate=unavailable ({e})");
            ok = false;
        }
    }
    if args.check_disjunct {
        match verify_disjunct(design.binary(), p.s() as usize, args.budget, args.force) {
            Ok(d) => {
                println!("disjunct={d}");
                ok &= d;
            }
            Err(e) => println!("disjunct=skipped ({e})"),
        }
    }
    println!("valid={ok}");
    if ok {
        Ok(())
    } else {
        Err(anyhow!("design violates its structural invariants")).code(EXIT_INVARIANT)
    }
}

pub fn pools(args: PoolsArgs) -> CliResult {
    let design = load_design(&args.design)?;
    let mut out = create(&args.out)?;
    formats::write_lab_sheet(&design, &mut out)?;
    out.flush()?;
    println!("tests={}", design.m());
    println!("pool_size={}", design.params().q());
    println!("volume_fraction={}", design.scale());
    Ok(())
}

pub fn decode(args: DecodeArgs) -> CliResult {
    let design = load_design(&args.design)?;
    let policy = ThresholdPolicy::new(args.epsilon)
        .ok_or_else(|| anyhow!("epsilon must be positive"))
        .code(EXIT_INVALID_PARAMS)?;
    let readout = formats::read_measurements(open(&args.measurements)?)
        .with_context(|| format!("reading {}", args.measurements.display()))?;
    if readout.len() != design.m() {
        return Err(anyhow!("{} measurements for a design with {} tests", readout.len(), design.m()))
            .code(EXIT_DIMENSION);
    }
    if !design.structure().is_valid() {
        return Err(anyhow!("design violates its structural invariants")).code(EXIT_INVARIANT);
    }
    let cert = design.certificate().code(EXIT_INVARIANT)?;
    let problem = NnladProblem::from_design(&design, readout).code(EXIT_INVALID_PARAMS)?;
    let solution = solve_nnlad(&problem, &args.solver.options());
    let calls = classify_nnlad(&solution, policy);
    let infected = decode::infected_set(&calls);
    let report = DecodeReport {
        calls,
        objective: solution.objective,
        status: solution.status.as_str().to_string(),
        bound_constant: cert.bound_constant,
        noise_tolerance: noise_tolerance(&cert, policy),
    };
    let mut out = create(&args.out)?;
    formats::write_report(&report, &mut out)?;
    out.flush()?;
    println!("status={}", report.status);
    println!("objective={}", report.objective);
    println!("iterations={}", solution.iterations);
    println!(
        "infected={}",
        infected.iter().map(usize::to_string).collect::<Vec<_>>().join(";")
    );
    Ok(())
}

pub fn budget(args: BudgetArgs) -> CliResult {
    let plan = plan_for_population(args.people, args.prevalence).code(EXIT_INVALID_PARAMS)?;
    let (k, dorfman) = dorfman_optimum(args.prevalence).code(EXIT_INVALID_PARAMS)?;
    println!("method,tests_per_individual,pool_size");
    println!("circulant,{},{}", plan.tests_per_individual(), plan.q());
    println!("dorfman,{dorfman},{k}");
    match budget_disjunct_bound(args.people, args.prevalence) {
        Ok(v) => println!("disjunct_bound,{v},n/a"),
        Err(BudgetError::DegenerateS(_)) => println!("disjunct_bound,n/a,n/a"),
        Err(e) => return Err(e).code(EXIT_INVALID_PARAMS),
    }
    Ok(())
}

fn parse_grid(spec: &str) -> anyhow::Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    match parts.as_slice() {
        [start, stop, step] => Ok(range_grid(start.trim().parse()?, stop.trim().parse()?, step.trim().parse()?)?),
        [list] => list.split(',').map(|v| Ok(v.trim().parse::<f64>()?)).collect(),
        _ => Err(anyhow!("grid must be start:stop:step or a comma list, got {spec:?}")),
    }
}

pub fn simulate(args: SimulateArgs) -> CliResult {
    let params = DesignParams::new(args.q, args.s).code(EXIT_INVALID_PARAMS)?;
    let p_grid = parse_grid(&args.p_grid).context("--p-grid").code(EXIT_INVALID_PARAMS)?;
    let pe_grid = parse_grid(&args.pe_grid).context("--pe-grid").code(EXIT_INVALID_PARAMS)?;
    let mut config = PhaseConfig::new(args.trials, args.seed);
    config.success_rel_tol = args.success_tol;
    config.poisson_mean = args.mean;
    config.corruption = match args.corruption {
        Corruption::ZeroOut => CorruptionKind::ZeroOut,
        Corruption::ReplaceRandom => CorruptionKind::ReplaceRandom,
        Corruption::Mixed => CorruptionKind::Mixed,
    };
    config.solver = args.solver.options();
    let design = construct_design(params);
    let diagram = run_phase_diagram(&design, &p_grid, &pe_grid, &config).code(EXIT_INVALID_PARAMS)?;
    let mut out = create(&args.out)?;
    formats::write_grid(&diagram, &mut out)?;
    out.flush()?;
    let failures: usize = diagram.solver_failures.iter().flatten().sum();
    println!("cells={}", p_grid.len() * pe_grid.len());
    println!("trials_per_cell={}", diagram.trials);
    println!("solver_failures={failures}");
    match region_check(&diagram) {
        Ok(report) => {
            let inside = report.cells.iter().filter(|c| c.inside).count();
            let outside = report.cells.iter().filter(|c| c.outside_with_margin).count();
            println!("region_cells_inside={inside}");
            println!("region_cells_outside_with_margin={outside}");
            println!("region_agreement={}", report.agreement);
        }
        Err(e) => println!("region_agreement=n/a ({e})"),
    }
    Ok(())
}

pub fn heatmap(args: HeatmapArgs) -> CliResult {
    let rows = formats::read_grid(open(&args.grid)?).with_context(|| format!("reading {}", args.grid.display()))?;
    if rows.is_empty() {
        return Err(anyhow!("grid file has no rows")).code(EXIT_INVALID_PARAMS);
    }
    let mut out = create(&args.out)?;
    out.write_all(pooldesign::heatmap::render_svg(&rows).as_bytes())?;
    out.flush()?;
    println!("cells={}", rows.len());
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_syntax() {
        assert_eq!(parse_grid("0:0.1:0.05").unwrap(), vec![0.0, 0.05, 0.1]);
        assert_eq!(parse_grid("0.01, 0.02").unwrap(), vec![0.01, 0.02]);
        assert_eq!(parse_grid("0.3").unwrap(), vec![0.3]);
        assert!(parse_grid("0:1").is_err());
        assert!(parse_grid("a:b:c").is_err());
    }
}
