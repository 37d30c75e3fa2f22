use super::{hermitize, max_abs, CMatrix, Liouvillian, OpenSystem, QuantumError, QuantumState, Result, C64};

/// Dense superoperator in column-stacked `vec(ρ)` ordering
/// (`vec(ρ)[i + j·d] = ρ[i, j]`).
pub fn liouvillian_matrix(sys: &OpenSystem) -> CMatrix {
    let d = sys.dim();
    let lv = Liouvillian::new(sys);
    let mut sup = CMatrix::zeros(d * d, d * d);
    let mut basis = CMatrix::zeros(d, d);
    let mut out = CMatrix::zeros(d, d);
    for j in 0..d {
        for i in 0..d {
            basis[(i, j)] = C64::from(1.0);
            lv.apply(&basis, &mut out);
            basis[(i, j)] = C64::from(0.0);
            let col = i + j * d;
            for jj in 0..d {
                for ii in 0..d {
                    sup[(ii + jj * d, col)] = out[(ii, jj)];
                }
            }
        }
    }
    sup
}

pub(crate) fn unvec(v: &[C64], d: usize) -> CMatrix {
    CMatrix::from_fn(d, d, |i, j| v[i + j * d])
}

/// Unique null vector of the Liouvillian, normalized to unit trace.
pub fn steady_state(sys: &OpenSystem) -> Result<QuantumState> {
    let d = sys.dim();
    let sup = liouvillian_matrix(sys);
    let scale = max_abs(&sup).max(1.0);
    let svd = sup.clone().svd(false, true);
    let v_t = svd.v_t.as_ref().expect("requested V^T");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]));
    let second = svd.singular_values[order[1]];
    if d > 1 && second < 1e-9 * scale {
        return Err(QuantumError::NonUniqueSteadyState { gap: second });
    }
    let row = v_t.row(order[0]);
    let null: Vec<C64> = row.iter().map(|z| z.conj()).collect();
    let mut rho = unvec(&null, d);
    let tr = rho.trace();
    rho /= tr;
    let rho = hermitize(&rho);
    let lv = Liouvillian::new(sys);
    let mut res = CMatrix::zeros(d, d);
    lv.apply(&rho, &mut res);
    let residual = max_abs(&res);
    if residual > 1e-9 * scale {
        return Err(QuantumError::SteadyStateResidual { residual });
    }
    Ok(QuantumState::Mixed(rho))
}
