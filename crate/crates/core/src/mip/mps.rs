//! Free-format MPS. Piecewise-linear objective terms are first rewritten
//! into binaries and convex-combination weights.

use std::fmt::Write as _;
use std::path::Path;

use super::lp::fmt_num;
use super::{MipModel, Sense, VarKind};
use crate::error::{Error, Result};

/// Replace every PWL objective term by an exact mixed-integer encoding:
/// segment binaries `y`, weights `lambda`, and an objective variable `w`.
pub fn linearize_pwl(model: &MipModel) -> Result<MipModel> {
    let mut out = model.clone();
    out.pwl.clear();
    for (t, term) in model.pwl.iter().enumerate() {
        let x = term.var;
        let (lb, ub) = (model.vars[x].lb, model.vars[x].ub);
        if !lb.is_finite() || !ub.is_finite() {
            return Err(Error::InvalidConfig(format!(
                "cannot linearize a PWL term over unbounded '{}'",
                model.vars[x].name
            )));
        }
        let mut pts = term.points.clone();
        if lb < pts[0].0 {
            pts.insert(0, (lb, pts[0].1));
        }
        let last = pts[pts.len() - 1];
        if ub > last.0 {
            pts.push((ub, last.1));
        }
        if pts.len() == 1 {
            pts.push((pts[0].0, pts[0].1));
        }
        let lam: Vec<_> =
            (0..pts.len()).map(|k| out.add_var(format!("pwl{t}_lambda_{k}"), VarKind::Continuous, 0.0, 1.0)).collect();
        let seg: Vec<_> =
            (0..pts.len() - 1).map(|k| out.add_var(format!("pwl{t}_y_{k}"), VarKind::Binary, 0.0, 1.0)).collect();
        let w = out.add_var(format!("pwl{t}_w"), VarKind::Continuous, f64::NEG_INFINITY, f64::INFINITY);
        out.add_row(format!("pwl{t}_seg"), seg.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0);
        out.add_row(format!("pwl{t}_conv"), lam.iter().map(|&v| (v, 1.0)).collect(), Sense::Eq, 1.0);
        for (k, &l) in lam.iter().enumerate() {
            let mut terms = vec![(l, 1.0)];
            if k > 0 {
                terms.push((seg[k - 1], -1.0));
            }
            if k < seg.len() {
                terms.push((seg[k], -1.0));
            }
            out.add_row(format!("pwl{t}_adj_{k}"), terms, Sense::Le, 0.0);
        }
        let mut xs = vec![(x, 1.0)];
        xs.extend(lam.iter().zip(&pts).map(|(&l, p)| (l, -p.0)));
        out.add_row(format!("pwl{t}_x"), xs, Sense::Eq, 0.0);
        let mut ws = vec![(w, 1.0)];
        ws.extend(lam.iter().zip(&pts).map(|(&l, p)| (l, -p.1)));
        out.add_row(format!("pwl{t}_w"), ws, Sense::Eq, 0.0);
        out.objective.push((w, 1.0));
    }
    Ok(out)
}

fn row_type(s: Sense) -> &'static str {
    match s {
        Sense::Le => "L",
        Sense::Eq => "E",
        Sense::Ge => "G",
    }
}

pub fn write_mps(model: &MipModel) -> Result<String> {
    let model = if model.pwl.is_empty() { model.clone() } else { linearize_pwl(model)? };
    let nvars = model.vars.len();
    // Column-major coefficients; row 0 is the objective.
    let mut cols: Vec<Vec<(usize, f64)>> = vec![Vec::new(); nvars];
    for &(v, c) in &model.objective {
        cols[v].push((0, c));
    }
    let mut names = vec!["obj".to_string()];
    let mut rhs = vec![0.0];
    let mut types = vec!["N"];
    for c in &model.constraints {
        let r = names.len();
        names.push(c.name.clone());
        rhs.push(c.rhs);
        types.push(row_type(c.sense));
        for &(v, a) in &c.terms {
            cols[v].push((r, a));
        }
    }
    for ind in &model.indicators {
        let r = names.len();
        names.push(ind.name.clone());
        rhs.push(ind.rhs);
        types.push(row_type(ind.sense));
        for &(v, a) in &ind.terms {
            cols[v].push((r, a));
        }
    }

    let mut out = String::new();
    let _ = writeln!(out, "NAME {}", model.name);
    out.push_str("ROWS\n");
    for (t, n) in types.iter().zip(&names) {
        let _ = writeln!(out, " {t} {n}");
    }
    out.push_str("COLUMNS\n");
    let mut in_int = false;
    let mut marker = 0;
    for (v, var) in model.vars.iter().enumerate() {
        let int = var.kind != VarKind::Continuous;
        if int != in_int {
            let tag = if int { "INTORG" } else { "INTEND" };
            let _ = writeln!(out, "    MARKER{marker} 'MARKER' '{tag}'");
            marker += 1;
            in_int = int;
        }
        if cols[v].is_empty() {
            let _ = writeln!(out, "    {} obj 0", var.name);
        }
        for &(r, a) in &cols[v] {
            let _ = writeln!(out, "    {} {} {}", var.name, names[r], fmt_num(a));
        }
    }
    if in_int {
        let _ = writeln!(out, "    MARKER{marker} 'MARKER' 'INTEND'");
    }
    out.push_str("RHS\n");
    for (r, &b) in rhs.iter().enumerate().skip(1) {
        if b != 0.0 {
            let _ = writeln!(out, "    RHS {} {}", names[r], fmt_num(b));
        }
    }
    out.push_str("BOUNDS\n");
    for var in &model.vars {
        let n = &var.name;
        let (lb, ub) = (var.lb, var.ub);
        if var.kind == VarKind::Binary && lb == 0.0 && ub == 1.0 {
            let _ = writeln!(out, " BV BND {n}");
        } else if lb == ub {
            let _ = writeln!(out, " FX BND {n} {}", fmt_num(lb));
        } else if lb == f64::NEG_INFINITY && ub == f64::INFINITY {
            let _ = writeln!(out, " FR BND {n}");
        } else {
            if lb == f64::NEG_INFINITY {
                let _ = writeln!(out, " MI BND {n}");
            } else if lb != 0.0 || var.kind != VarKind::Continuous {
                let _ = writeln!(out, " LO BND {n} {}", fmt_num(lb));
            }
            if ub != f64::INFINITY {
                let _ = writeln!(out, " UP BND {n} {}", fmt_num(ub));
            }
        }
    }
    if !model.indicators.is_empty() {
        out.push_str("INDICATORS\n");
        for ind in &model.indicators {
            let _ = writeln!(out, " IF {} {} {}", ind.name, model.vars[ind.var].name, ind.value as u8);
        }
    }
    out.push_str("ENDATA\n");
    Ok(out)
}

pub fn export_mps(model: &MipModel, path: &Path) -> Result<()> {
    let text = write_mps(model)?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::super::PwlTerm;
    use super::*;

    #[test]
    fn linearized_pwl_matches_on_grid() {
        let mut m = MipModel::new("p");
        let x = m.add_var("x", VarKind::Continuous, -0.5, 1.5);
        m.pwl.push(PwlTerm { var: x, points: vec![(0.0, 0.3), (0.3, 0.0), (1.0, 0.7)] });
        let lin = linearize_pwl(&m).unwrap();
        assert!(lin.pwl.is_empty());
        // For a point x on a segment, the canonical lambda/y choice satisfies all rows.
        let pts = [(-0.5, 0.3), (0.0, 0.3), (0.3, 0.0), (1.0, 0.7), (1.5, 0.7)];
        for xv in [-0.5, -0.1, 0.0, 0.2, 0.3, 0.8, 1.2, 1.5] {
            let k = pts.windows(2).position(|w| xv <= w[1].0).unwrap();
            let (a, b) = (pts[k], pts[k + 1]);
            let th = (xv - a.0) / (b.0 - a.0);
            let mut vals = vec![0.0; lin.vars.len()];
            vals[x] = xv;
            vals[lin.var_by_name(&format!("pwl0_lambda_{k}")).unwrap()] = 1.0 - th;
            vals[lin.var_by_name(&format!("pwl0_lambda_{}", k + 1)).unwrap()] = th;
            vals[lin.var_by_name(&format!("pwl0_y_{k}")).unwrap()] = 1.0;
            let w = a.1 + th * (b.1 - a.1);
            vals[lin.var_by_name("pwl0_w").unwrap()] = w;
            assert!(lin.verify(&vals).is_ok(), "x = {xv}");
            assert!((lin.objective_value(&vals) - m.pwl[0].eval(xv)).abs() < 1e-12);
        }
    }

    #[test]
    fn mps_sections() {
        let mut m = MipModel::new("s");
        let d = m.add_var("d", VarKind::Binary, 0.0, 1.0);
        let k = m.add_var("k", VarKind::Integer, 0.0, 4.0);
        let u = m.add_var("u", VarKind::Continuous, 0.0, f64::INFINITY);
        m.add_row("c", vec![(k, 1.0), (u, -1.0)], Sense::Le, 2.0);
        m.add_indicator("i", d, true, vec![(u, 1.0)], Sense::Ge, 0.5);
        m.objective = vec![(u, 1.0)];
        let text = write_mps(&m).unwrap();
        for needle in ["ROWS\n N obj\n L c\n G i\n", "'INTORG'", "'INTEND'", " BV BND d", " UP BND k 4", "INDICATORS\n IF i d 1"] {
            assert!(text.contains(needle), "missing {needle:?} in\n{text}");
        }
        assert!(text.ends_with("ENDATA\n"));
    }
}
