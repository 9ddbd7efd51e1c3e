//! Gated graph encoder layer.
//!
//! For node features `H` (N×d) and normalised adjacency `Ã`:
//!
//! ```text
//! a  = Ã H W_a
//! z  = σ(a W_z + H U_z + b_z)
//! r  = σ(a W_r + H U_r + b_r)
//! H~ = tanh(a W_h + (r ⊙ H) U_h + b_h)
//! Ĥ  = H~ ⊙ z + H ⊙ (1 - z)
//! ```
//!
//! Weights are stored right-multiplied, so every matrix is d×d and every
//! bias 1×d. Rows whose mask entry is false are zero on output.

use crate::error::{Error, Result};
use crate::numcore::{NodeId, ParamId, ParamStore, Tape};

#[derive(Clone, Debug)]
pub struct GgnnParams {
    pub w_a: ParamId,
    pub w_z: ParamId,
    pub u_z: ParamId,
    pub b_z: ParamId,
    pub w_r: ParamId,
    pub u_r: ParamId,
    pub b_r: ParamId,
    pub w_h: ParamId,
    pub u_h: ParamId,
    pub b_h: ParamId,
    pub dim: usize,
}

impl GgnnParams {
    /// Registers one layer under `prefix`. Matrices are Glorot-uniform,
    /// biases start at zero.
    pub fn register(store: &mut ParamStore, prefix: &str, dim: usize, seed: u64) -> Self {
        let mut mat = |name: &str| store.insert_glorot(&format!("{prefix}.{name}"), dim, dim, seed);
        let (w_a, w_z, u_z, w_r, u_r, w_h, u_h) = (
            mat("w_a"),
            mat("w_z"),
            mat("u_z"),
            mat("w_r"),
            mat("u_r"),
            mat("w_h"),
            mat("u_h"),
        );
        let mut bias = |name: &str| store.insert_zeros(&format!("{prefix}.{name}"), 1, dim);
        let (b_z, b_r, b_h) = (bias("b_z"), bias("b_r"), bias("b_h"));
        Self {
            w_a,
            w_z,
            u_z,
            b_z,
            w_r,
            u_r,
            b_r,
            w_h,
            u_h,
            b_h,
            dim,
        }
    }

    pub fn ids(&self) -> [ParamId; 10] {
        [
            self.w_a, self.w_z, self.u_z, self.b_z, self.w_r, self.u_r, self.b_r, self.w_h,
            self.u_h, self.b_h,
        ]
    }
}

/// Node features on a tape plus the live-node mask.
#[derive(Clone, Debug)]
pub struct NodeFeatures {
    pub h: NodeId,
    pub mask: Vec<bool>,
}

impl NodeFeatures {
    pub fn all_live(h: NodeId, n: usize) -> Self {
        Self {
            h,
            mask: vec![true; n],
        }
    }

    pub fn live_count(&self) -> usize {
        self.mask.iter().filter(|&&m| m).count()
    }
}

fn gate(
    tape: &mut Tape<'_>,
    a: NodeId,
    h: NodeId,
    w: ParamId,
    u: ParamId,
    b: ParamId,
) -> Result<NodeId> {
    let (w, u, b) = (tape.param(w), tape.param(u), tape.param(b));
    let aw = tape.matmul(a, w)?;
    let hu = tape.matmul(h, u)?;
    let s = tape.add(aw, hu)?;
    tape.add_row(s, b)
}

/// One propagation step over `adj`.
pub fn ggnn_forward(
    tape: &mut Tape<'_>,
    adj: NodeId,
    x: &NodeFeatures,
    p: &GgnnParams,
) -> Result<NodeFeatures> {
    let (ar, ac) = tape.shape(adj);
    let (hr, hc) = tape.shape(x.h);
    if ar != ac || ar != hr {
        return Err(Error::shape("ggnn adjacency vs features", (ar, ac), (hr, hc)));
    }
    if x.mask.len() != hr {
        return Err(Error::shape("ggnn mask", (hr, hc), (x.mask.len(), 1)));
    }
    if hc != p.dim {
        return Err(Error::shape("ggnn feature width", (hr, hc), (p.dim, p.dim)));
    }
    let h = x.h;
    let w_a = tape.param(p.w_a);
    let ah = tape.matmul(adj, h)?;
    let a = tape.matmul(ah, w_a)?;

    let z_pre = gate(tape, a, h, p.w_z, p.u_z, p.b_z)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, a, h, p.w_r, p.u_r, p.b_r)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.hadamard(r, h)?;
    let cand_pre = gate(tape, a, rh, p.w_h, p.u_h, p.b_h)?;
    let cand = tape.tanh(cand_pre);

    let keep = tape.one_minus(z);
    let new_part = tape.hadamard(cand, z)?;
    let old_part = tape.hadamard(h, keep)?;
    let out = tape.add(new_part, old_part)?;
    let out = tape.mask_rows(out, &x.mask)?;
    Ok(NodeFeatures {
        h: out,
        mask: x.mask.clone(),
    })
}

/// Sequential stack of claim encoder layers. An empty stack is the identity.
pub fn encode_claim(
    tape: &mut Tape<'_>,
    adj: NodeId,
    h0: NodeFeatures,
    layers: &[GgnnParams],
) -> Result<NodeFeatures> {
    layers
        .iter()
        .try_fold(h0, |h, layer| ggnn_forward(tape, adj, &h, layer))
}
