//! Text format for PDE problems read by `annbn solve-pde`.
//!
//! One directive per line; `#` starts a comment.
//!
//! ```text
//! laplace_rect a=1 b=1 f0=1 dx=0.02 dy=0.02
//! ```
//!
//! names the built-in Laplace benchmark, which has a closed-form solution.
//! Any other problem is spelled out point by point:
//!
//! ```text
//! dim 2
//! term 1 2 0                 # coefficient, derivative order, dimension
//! term x0 0 0                # a coefficient may be a coordinate x<p>
//! interior 0.5 0.5 0.0       # coordinates, then the source value
//! boundary 0 0.5 0.0         # coordinates, then the solution value
//! boundary_derivative 1 0  1 0.5 0.0   # order, dimension, coordinates, value
//! kernel gaussian 0.02       # optional; defaults from the point spacing
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use annbn_core::benchmarks::LaplaceSpec;
use annbn_core::{BoundaryCondition, BoundarySet, Coefficient, Kernel, KernelKind, Matrix, OperatorTerm, PdeProblem};

#[derive(Debug, thiserror::Error)]
#[error("{path}:{line}: {msg}")]
pub struct ProblemError {
    pub path: String,
    pub line: usize,
    pub msg: String,
}

#[derive(Debug, Clone)]
pub enum ProblemSpec {
    LaplaceRect { spec: LaplaceSpec, kernel: Option<Kernel> },
    Explicit(PdeProblem),
}

#[derive(Default)]
struct Explicit {
    dim: Option<usize>,
    terms: Vec<OperatorTerm>,
    interior: Vec<Vec<f64>>,
    source: Vec<f64>,
    values: BTreeMap<BoundaryKey, (Vec<Vec<f64>>, Vec<f64>)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum BoundaryKey {
    Value,
    Derivative(usize, usize),
}

pub fn read_problem(path: &Path) -> Result<ProblemSpec, ProblemError> {
    let text = std::fs::read_to_string(path).map_err(|e| ProblemError {
        path: path.display().to_string(),
        line: 0,
        msg: e.to_string(),
    })?;
    parse_problem(&text).map_err(|(line, msg)| ProblemError { path: path.display().to_string(), line, msg })
}

pub fn parse_problem(text: &str) -> Result<ProblemSpec, (usize, String)> {
    let mut builtin: Option<(usize, LaplaceSpec)> = None;
    let mut kernel: Option<Kernel> = None;
    let mut ex = Explicit::default();
    let mut explicit_line = None;

    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        let mut tok = content.split_whitespace();
        let keyword = tok.next().unwrap_or_default();
        let args: Vec<&str> = tok.collect();
        let fail = |msg: String| Err((line, msg));
        match keyword {
            "laplace_rect" => {
                if builtin.is_some() {
                    return fail("`laplace_rect` given twice".to_string());
                }
                builtin = Some((line, laplace_spec(&args).map_err(|m| (line, m))?));
            }
            "kernel" => {
                if args.len() != 2 {
                    return fail("expected `kernel <kind> <c>`".to_string());
                }
                let kind: KernelKind = args[0].parse().map_err(|e: annbn_core::Error| (line, e.to_string()))?;
                let c = number(args[1]).map_err(|m| (line, m))?;
                kernel = Some(Kernel::new(kind, c).map_err(|e| (line, e.to_string()))?);
            }
            "dim" => {
                explicit_line.get_or_insert(line);
                if args.len() != 1 {
                    return fail("expected `dim <n>`".to_string());
                }
                let n: usize = args[0].parse().map_err(|_| (line, format!("`{}` is not a dimension", args[0])))?;
                if n == 0 {
                    return fail("dimension must be positive".to_string());
                }
                ex.dim = Some(n);
            }
            "term" => {
                explicit_line.get_or_insert(line);
                if args.len() != 3 {
                    return fail("expected `term <coefficient> <order> <dim>`".to_string());
                }
                let coefficient = coefficient(args[0]).map_err(|m| (line, m))?;
                let order = index(args[1]).map_err(|m| (line, m))?;
                let dim = index(args[2]).map_err(|m| (line, m))?;
                ex.terms.push(OperatorTerm::new(coefficient, order, dim));
            }
            "interior" | "boundary" | "boundary_derivative" => {
                explicit_line.get_or_insert(line);
                let Some(n) = ex.dim else {
                    return fail(format!("`{keyword}` before `dim`"));
                };
                let (key, rest) = if keyword == "boundary_derivative" {
                    if args.len() < 2 {
                        return fail("expected `boundary_derivative <order> <dim> <coords…> <value>`".to_string());
                    }
                    let order = index(args[0]).map_err(|m| (line, m))?;
                    let dim = index(args[1]).map_err(|m| (line, m))?;
                    (BoundaryKey::Derivative(order, dim), &args[2..])
                } else {
                    (BoundaryKey::Value, &args[..])
                };
                if rest.len() != n + 1 {
                    return fail(format!("expected {n} coordinates and a value, found {} numbers", rest.len()));
                }
                let nums = rest.iter().map(|s| number(s)).collect::<Result<Vec<f64>, String>>().map_err(|m| (line, m))?;
                let (point, value) = (nums[..n].to_vec(), nums[n]);
                if keyword == "interior" {
                    ex.interior.push(point);
                    ex.source.push(value);
                } else {
                    let entry = ex.values.entry(key).or_default();
                    entry.0.push(point);
                    entry.1.push(value);
                }
            }
            other => return fail(format!("unknown directive `{other}`")),
        }
    }

    match (builtin, explicit_line) {
        (Some((line, _)), Some(other)) => {
            Err((line.max(other), "`laplace_rect` cannot be mixed with explicit points or terms".to_string()))
        }
        (Some((_, spec)), None) => Ok(ProblemSpec::LaplaceRect { spec, kernel }),
        (None, _) => explicit_problem(ex, kernel, text.lines().count()),
    }
}

fn explicit_problem(ex: Explicit, kernel: Option<Kernel>, last_line: usize) -> Result<ProblemSpec, (usize, String)> {
    let end = |msg: &str| (last_line, msg.to_string());
    if ex.dim.is_none() {
        return Err(end("problem has no `dim` line and no builtin"));
    }
    if ex.terms.is_empty() {
        return Err(end("problem has no `term` lines"));
    }
    if ex.interior.is_empty() {
        return Err(end("problem has no `interior` points"));
    }
    let interior = Matrix::from_rows(&ex.interior).map_err(|e| (last_line, e.to_string()))?;
    let kernel = kernel.unwrap_or_else(|| annbn_core::pde::default_kernel(&interior));
    let mut boundary = Vec::new();
    for (key, (points, values)) in ex.values {
        let condition = match key {
            BoundaryKey::Value => BoundaryCondition::Value,
            BoundaryKey::Derivative(order, dim) => BoundaryCondition::Derivative { order, dim },
        };
        let points = Matrix::from_rows(&points).map_err(|e| (last_line, e.to_string()))?;
        boundary.push(BoundarySet { points, values, condition });
    }
    let problem = PdeProblem { terms: ex.terms, interior, source: ex.source, boundary, kernel };
    problem.validate().map_err(|e| (last_line, e.to_string()))?;
    Ok(ProblemSpec::Explicit(problem))
}

fn laplace_spec(args: &[&str]) -> Result<LaplaceSpec, String> {
    let mut spec = LaplaceSpec::default();
    let mut dy = None;
    for a in args {
        let (k, v) = a.split_once('=').ok_or_else(|| format!("expected key=value, found `{a}`"))?;
        let v = number(v)?;
        match k {
            "a" => spec.a = v,
            "b" => spec.b = v,
            "f0" => spec.f0 = v,
            "dx" => spec.dx = v,
            "dy" => dy = Some(v),
            _ => return Err(format!("unknown laplace_rect parameter `{k}`")),
        }
    }
    spec.dy = dy.unwrap_or(spec.dx);
    Ok(spec)
}

fn number(s: &str) -> Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("`{s}` is not a finite number")),
    }
}

fn index(s: &str) -> Result<usize, String> {
    s.parse().map_err(|_| format!("`{s}` is not a non-negative integer"))
}

fn coefficient(s: &str) -> Result<Coefficient, String> {
    match s.strip_prefix('x') {
        Some(p) => index(p).map(Coefficient::Coordinate),
        None => number(s).map(Coefficient::Const),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_reads_parameters() {
        let spec = match parse_problem("# grid\nlaplace_rect a=2 b=1 f0=3 dx=0.1\n").unwrap() {
            ProblemSpec::LaplaceRect { spec, kernel: None } => spec,
            other => panic!("{other:?}"),
        };
        assert_eq!((spec.a, spec.b, spec.f0, spec.dx, spec.dy), (2.0, 1.0, 3.0, 0.1, 0.1));
    }

    #[test]
    fn explicit_problem_groups_boundaries() {
        let text = "dim 1\nterm 1 2 0\nkernel gaussian 0.5\ninterior 0.5 0\ninterior 0.25 0\nboundary 0 0\nboundary 1 1\nboundary_derivative 1 0 1 1\n";
        let ProblemSpec::Explicit(p) = parse_problem(text).unwrap() else { panic!() };
        assert_eq!(p.interior.nrows(), 2);
        assert_eq!(p.boundary.len(), 2);
        assert_eq!(p.boundary[0].condition, BoundaryCondition::Value);
        assert_eq!(p.boundary[0].values, vec![0.0, 1.0]);
        assert_eq!(p.boundary[1].condition, BoundaryCondition::Derivative { order: 1, dim: 0 });
        assert_eq!(p.kernel, Kernel::gaussian(0.5));
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(parse_problem("dim 2\n\nterm 1 2\n").unwrap_err().0, 3);
        assert_eq!(parse_problem("dim 1\ninterior 0.5\n").unwrap_err().0, 2);
        assert_eq!(parse_problem("laplace_rect a=1 q=2\n").unwrap_err().0, 1);
        assert_eq!(parse_problem("# c\nfrobnicate\n").unwrap_err().0, 2);
        assert_eq!(parse_problem("laplace_rect\ndim 2\n").unwrap_err().0, 2);
    }

    #[test]
    fn coordinate_coefficients() {
        assert!(matches!(coefficient("x1"), Ok(Coefficient::Coordinate(1))));
        assert!(matches!(coefficient("-2.5"), Ok(Coefficient::Const(c)) if c == -2.5));
        assert!(coefficient("xy").is_err());
    }
}
