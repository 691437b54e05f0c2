use nalgebra::DMatrix;

use super::{BlockLayout, LinearOperator, SparseMatrix};
use crate::assembly::AssembledForms;
use crate::complex::IncidenceMatrices;
use crate::{Error, Result};

/// The 3×3 block operator of one Crank–Nicolson step, unknowns ordered (B, E, p):
///
/// ```text
/// [ (2/τ)Mb        Mb K           0      ]
/// [ −KᵀMb     (2/τ)Me + Z       Me G     ]
/// [   0          −GᵀMe        (2/τ)Mp    ]
/// ```
///
/// The auxiliary variant adds `DᵀM0D` to the (1,1) block.
#[derive(Debug, Clone)]
pub struct SystemOperator {
    pub tau: f64,
    pub aux: bool,
    pub layout: BlockLayout,
    pub mb: SparseMatrix,
    pub me: SparseMatrix,
    pub mp: SparseMatrix,
    pub z: SparseMatrix,
    pub k: SparseMatrix,
    pub g: SparseMatrix,
    pub d: SparseMatrix,
    pub mb_k: SparseMatrix,
    pub kt_mb: SparseMatrix,
    pub me_g: SparseMatrix,
    pub gt_me: SparseMatrix,
    pub a11: SparseMatrix,
    pub a22: SparseMatrix,
    pub a33: SparseMatrix,
}

pub fn build_system(tau: f64, forms: &AssembledForms, inc: &IncidenceMatrices, aux: bool) -> Result<SystemOperator> {
    if !(tau > 0.0 && tau.is_finite()) {
        return Err(Error::InvalidConfig(format!("time step {tau} must be positive")));
    }
    let s = 2.0 / tau;
    let (k, g, d) = (inc.k_f64(), inc.g_f64(), inc.d_f64());
    let mb_k = forms.mb.spgemm(&k)?;
    let me_g = forms.me.spgemm(&g)?;
    let mut a11 = forms.mb.scaled(s);
    if aux {
        let dt_m0_d = d.transpose().spgemm(&forms.m0.spgemm(&d)?)?;
        a11 = a11.add_scaled(1.0, &dt_m0_d, 1.0)?;
    }
    Ok(SystemOperator {
        tau,
        aux,
        layout: BlockLayout::new(forms.mb.rows(), forms.me.rows(), forms.mp.rows()),
        kt_mb: mb_k.transpose(),
        gt_me: me_g.transpose(),
        a22: forms.me.add_scaled(s, &forms.z, 1.0)?,
        a33: forms.mp.scaled(s),
        mb_k,
        me_g,
        a11,
        mb: forms.mb.clone(),
        me: forms.me.clone(),
        mp: forms.mp.clone(),
        z: forms.z.clone(),
        k,
        g,
        d,
    })
}

impl SystemOperator {
    /// Dense copy of the full operator, for oracle checks on small meshes.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let l = self.layout;
        let mut a = DMatrix::zeros(l.total(), l.total());
        let put = |a: &mut DMatrix<f64>, m: &SparseMatrix, r0: usize, c0: usize, s: f64| {
            for (r, c, v) in m.triplets() {
                a[(r0 + r, c0 + c)] += s * v;
            }
        };
        let (b, e, p) = (l.b().start, l.e().start, l.p().start);
        put(&mut a, &self.a11, b, b, 1.0);
        put(&mut a, &self.mb_k, b, e, 1.0);
        put(&mut a, &self.kt_mb, e, b, -1.0);
        put(&mut a, &self.a22, e, e, 1.0);
        put(&mut a, &self.me_g, e, p, 1.0);
        put(&mut a, &self.gt_me, p, e, -1.0);
        put(&mut a, &self.a33, p, p, 1.0);
        a
    }

    /// Largest entry magnitude over all blocks.
    pub fn max_abs(&self) -> f64 {
        [&self.a11, &self.mb_k, &self.a22, &self.me_g, &self.a33]
            .iter()
            .map(|m| m.max_abs())
            .fold(0.0, f64::max)
    }

    /// `(2/τ)(‖B‖²_Mb + ‖E‖²_Me + ‖p‖²_Mp) + ‖E‖²_Z`; equals `⟨𝒜x, x⟩` for the
    /// non-auxiliary operator because the off-diagonal blocks are skew.
    pub fn energy_form(&self, x: &[f64]) -> f64 {
        let (b, e, p) = self.layout.split(x);
        let s = 2.0 / self.tau;
        s * (self.mb.quad_form(b) + self.me.quad_form(e) + self.mp.quad_form(p)) + self.z.quad_form(e)
    }
}

impl LinearOperator for SystemOperator {
    fn dim(&self) -> usize {
        self.layout.total()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let l = self.layout;
        let (xb, xe, xp) = l.split(x);
        let (yb, ye, yp) = l.split_mut(y);
        self.a11.mul_into(xb, yb);
        self.mb_k.mul_add_into(1.0, xe, yb);
        self.a22.mul_into(xe, ye);
        self.kt_mb.mul_add_into(-1.0, xb, ye);
        self.me_g.mul_add_into(1.0, xp, ye);
        self.a33.mul_into(xp, yp);
        self.gt_me.mul_add_into(-1.0, xe, yp);
    }
}
