use super::tape::{NodeId, Tape};

/// The learnable tensors of one gated recurrent unit, as tape nodes:
/// update gate (`w_z`, `u_z`, `b_z`), reset gate (`w_r`, `u_r`, `b_r`)
/// and candidate (`w_h`, `u_h`, `b_h`). `w_*` act on the input, `u_*`
/// on the previous hidden state.
#[derive(Debug, Clone, Copy)]
pub struct GruNodes {
    pub w_z: NodeId,
    pub u_z: NodeId,
    pub b_z: NodeId,
    pub w_r: NodeId,
    pub u_r: NodeId,
    pub b_r: NodeId,
    pub w_h: NodeId,
    pub u_h: NodeId,
    pub b_h: NodeId,
}

/// One GRU transition:
///
/// z = σ(W_z x + U_z h + b_z)
/// r = σ(W_r x + U_r h + b_r)
/// h̃ = tanh(W_h x + U_h (r ⊙ h) + b_h)
/// h' = (1 − z) ⊙ h + z ⊙ h̃
pub fn gru_step(tape: &mut Tape, x: NodeId, h_prev: NodeId, p: &GruNodes) -> NodeId {
    let z_pre = tape.affine2(p.w_z, x, p.u_z, h_prev, p.b_z);
    let z = tape.sigmoid(z_pre);
    let r_pre = tape.affine2(p.w_r, x, p.u_r, h_prev, p.b_r);
    let r = tape.sigmoid(r_pre);
    let gated = tape.mul(r, h_prev);
    let cand_pre = tape.affine2(p.w_h, x, p.u_h, gated, p.b_h);
    let cand = tape.tanh(cand_pre);
    let keep = tape.one_minus(z);
    let kept = tape.mul(keep, h_prev);
    let new = tape.mul(z, cand);
    tape.add(kept, new)
}

/// Highway layer parameters: a square transform and its gate.
#[derive(Debug, Clone, Copy)]
pub struct HighwayNodes {
    pub transform_w: NodeId,
    pub transform_b: NodeId,
    pub gate_w: NodeId,
    pub gate_b: NodeId,
}

/// Row-wise highway layer on `[n, d]`:
///
/// g = σ(W_g x + b_g),  y = g ⊙ relu(W x + b) + (1 − g) ⊙ x
pub fn highway_rows(tape: &mut Tape, x: NodeId, p: &HighwayNodes) -> NodeId {
    let d = tape.value(x).cols();
    assert_eq!(
        tape.value(p.transform_w).shape(),
        [d, d],
        "highway: transform must be square"
    );
    let gate_pre = tape.linear_rows(x, p.gate_w, p.gate_b);
    let gate = tape.sigmoid(gate_pre);
    let trans_pre = tape.linear_rows(x, p.transform_w, p.transform_b);
    let trans = tape.relu(trans_pre);
    let carried = tape.one_minus(gate);
    let pass = tape.mul(carried, x);
    let transformed = tape.mul(gate, trans);
    tape.add(transformed, pass)
}
