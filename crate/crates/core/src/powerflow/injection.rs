//! Bus injection kernel shared by the PF and OPF solvers.

use num_complex::Complex64;

use crate::grid::AdmittanceMatrix;

pub(crate) fn complex_voltages(vm: &[f64], va: &[f64]) -> Vec<Complex64> {
    vm.iter()
        .zip(va)
        .map(|(&m, &a)| Complex64::from_polar(m, a))
        .collect()
}

/// Injected currents `I = Y V`.
pub(crate) fn currents(y: &AdmittanceMatrix, v: &[Complex64]) -> Vec<Complex64> {
    (0..y.n())
        .map(|i| y.row(i).map(|(k, yik)| yik * v[k]).sum())
        .collect()
}

/// Calculated injections `P_i + jQ_i = V_i Σ_k conj(Y_ik V_k)` in p.u.
pub fn injections(y: &AdmittanceMatrix, vm: &[f64], va: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let v = complex_voltages(vm, va);
    let i = currents(y, &v);
    v.iter()
        .zip(&i)
        .map(|(vk, ik)| {
            let s = vk * ik.conj();
            (s.re, s.im)
        })
        .unzip()
}

/// Partial derivatives of the complex injection at each bus.
///
/// For row `i`, yields `(k, dS_i/dva_k, dS_i/dvm_k)` over the stored
/// pattern of `Y` (which always includes the diagonal).
pub(crate) struct InjectionDerivatives {
    pub rows: Vec<Vec<(usize, Complex64, Complex64)>>,
}

pub(crate) fn injection_derivatives(y: &AdmittanceMatrix, vm: &[f64], va: &[f64]) -> InjectionDerivatives {
    let v = complex_voltages(vm, va);
    let cur = currents(y, &v);
    let j = Complex64::new(0.0, 1.0);
    let rows = (0..y.n())
        .map(|i| {
            y.row(i)
                .map(|(k, yik)| {
                    let unit_k = if vm[k] != 0.0 { v[k] / vm[k] } else { Complex64::from_polar(1.0, va[k]) };
                    let mut d_va = -j * v[i] * (yik * v[k]).conj();
                    let mut d_vm = v[i] * (yik * unit_k).conj();
                    if k == i {
                        d_va += j * v[i] * cur[i].conj();
                        d_vm += cur[i].conj() * unit_k;
                    }
                    (k, d_va, d_vm)
                })
                .collect()
        })
        .collect();
    InjectionDerivatives { rows }
}

/// Vector-Jacobian product: `Σ_i wp_i ∇P_i + wq_i ∇Q_i` with respect to
/// `(vm, va)`, returned as `(d_vm, d_va)`.
pub(crate) fn injection_vjp(
    y: &AdmittanceMatrix,
    vm: &[f64],
    va: &[f64],
    wp: &[f64],
    wq: &[f64],
) -> (Vec<f64>, Vec<f64>) {
    let d = injection_derivatives(y, vm, va);
    let n = y.n();
    let mut g_vm = vec![0.0; n];
    let mut g_va = vec![0.0; n];
    for (i, row) in d.rows.iter().enumerate() {
        if wp[i] == 0.0 && wq[i] == 0.0 {
            continue;
        }
        for &(k, d_va, d_vm) in row {
            g_va[k] += wp[i] * d_va.re + wq[i] * d_va.im;
            g_vm[k] += wp[i] * d_vm.re + wq[i] * d_vm.im;
        }
    }
    (g_vm, g_va)
}
