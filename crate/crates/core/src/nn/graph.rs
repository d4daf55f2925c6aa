use alloc::vec;
use alloc::vec::Vec;

use super::{LayerSpec, NetworkSpec, ParamStore, Tensor};
use crate::error::{bail, Result};

/// Activations recorded by [`forward`].
#[derive(Clone, Debug)]
pub struct Tape {
    fingerprint: u64,
    generation: u64,
    output_shape: Vec<usize>,
    nodes: Vec<Node>,
}

#[derive(Clone, Debug)]
enum Node {
    Dense { input: Tensor },
    Conv { input: Tensor },
    Relu { active: Vec<bool> },
    Ode { steps: Vec<Vec<Node>> },
    Concat { a: Vec<Node>, b: Vec<Node> },
}

/// Gradients from [`backward`]: one tensor per parameter, plus the input.
#[derive(Clone, Debug)]
pub struct Backward {
    pub params: ParamStore,
    pub input: Tensor,
}

/// Runs `spec` on one sample.
///
/// Shapes are checked before any arithmetic: a mismatch between the spec's
/// layers, the parameters or the input is a configuration error naming the
/// offending layer.
pub fn forward(spec: &NetworkSpec, params: &ParamStore, input: &Tensor) -> Result<(Tensor, Tape)> {
    let shapes = spec.shapes()?;
    if input.shape() != spec.input_shape.as_slice() {
        bail!(Config, "input shape {:?} does not match network input {:?}", input.shape(), spec.input_shape);
    }
    if !params.matches(spec) {
        bail!(Config, "parameter store does not match the network layers");
    }
    let (output, nodes) = run(spec, params, 0, input.clone())?;
    let tape = Tape {
        fingerprint: spec.fingerprint(),
        generation: params.generation(),
        output_shape: shapes.last().cloned().unwrap_or_default(),
        nodes,
    };
    Ok((output, tape))
}

/// Back-propagates `loss_gradient` (the gradient of a scalar loss with
/// respect to the network output) through `tape`.
pub fn backward(spec: &NetworkSpec, params: &ParamStore, tape: &Tape, loss_gradient: &Tensor) -> Result<Backward> {
    check_tape(spec, params, tape, loss_gradient)?;
    let mut grads = params.zeros_like();
    let input = back(spec, params, 0, &tape.nodes, loss_gradient.clone(), &mut grads, true)?
        .expect("input gradient requested");
    Ok(Backward { params: grads, input })
}

/// Like [`backward`] but skips the input gradient and accumulates into
/// `grads` instead of allocating.
pub fn backward_into(
    spec: &NetworkSpec,
    params: &ParamStore,
    tape: &Tape,
    loss_gradient: &Tensor,
    grads: &mut ParamStore,
) -> Result<()> {
    check_tape(spec, params, tape, loss_gradient)?;
    if grads.len() != params.len() {
        bail!(Usage, "gradient store does not match the parameters");
    }
    back(spec, params, 0, &tape.nodes, loss_gradient.clone(), grads, false)?;
    Ok(())
}

fn check_tape(spec: &NetworkSpec, params: &ParamStore, tape: &Tape, loss_gradient: &Tensor) -> Result<()> {
    if tape.fingerprint != spec.fingerprint() {
        bail!(Usage, "tape was recorded for a different network");
    }
    if tape.generation != params.generation() {
        bail!(Usage, "tape is stale: parameters changed since the forward pass");
    }
    if loss_gradient.shape() != tape.output_shape.as_slice() {
        bail!(
            Usage,
            "loss gradient shape {:?} does not match output {:?}",
            loss_gradient.shape(),
            tape.output_shape
        );
    }
    Ok(())
}

fn param_offsets(spec: &NetworkSpec, base: usize) -> Vec<usize> {
    let mut at = base;
    spec.tensor_counts()
        .into_iter()
        .map(|c| {
            let start = at;
            at += c;
            start
        })
        .collect()
}

fn run(spec: &NetworkSpec, params: &ParamStore, base: usize, mut x: Tensor) -> Result<(Tensor, Vec<Node>)> {
    let offsets = param_offsets(spec, base);
    let mut nodes = Vec::with_capacity(spec.layers.len());
    for (layer, &p) in spec.layers.iter().zip(&offsets) {
        match layer {
            LayerSpec::Dense { .. } => {
                let out = dense_forward(&x, params.tensor(p), params.tensor(p + 1));
                nodes.push(Node::Dense { input: x });
                x = out;
            }
            LayerSpec::Conv2d { padding, .. } => {
                let out = conv_forward(&x, params.tensor(p), params.tensor(p + 1), *padding);
                nodes.push(Node::Conv { input: x });
                x = out;
            }
            LayerSpec::Relu => {
                let active: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
                for v in x.data_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
                nodes.push(Node::Relu { active });
            }
            LayerSpec::OdeBlock { inner, steps, step_size } => {
                let mut step_nodes = Vec::with_capacity(*steps);
                for _ in 0..*steps {
                    let (f, inner_nodes) = run(inner, params, p, x.clone())?;
                    for (xv, fv) in x.data_mut().iter_mut().zip(f.data()) {
                        *xv += step_size * fv;
                    }
                    step_nodes.push(inner_nodes);
                }
                nodes.push(Node::Ode { steps: step_nodes });
            }
            LayerSpec::Concat { branch_a, branch_b } => {
                let split = branch_a.input_len();
                let data = x.into_data();
                let xa = Tensor::new(branch_a.input_shape.clone(), data[..split].to_vec())?;
                let xb = Tensor::new(branch_b.input_shape.clone(), data[split..].to_vec())?;
                let b_base = p + branch_a.tensor_counts().iter().sum::<usize>();
                let (ya, na) = run(branch_a, params, p, xa)?;
                let (yb, nb) = run(branch_b, params, b_base, xb)?;
                let mut joined = ya.into_data();
                joined.extend_from_slice(yb.data());
                x = Tensor::from_vec(joined);
                nodes.push(Node::Concat { a: na, b: nb });
            }
        }
        if !x.is_finite() {
            bail!(Domain, "non-finite activation after a {} layer", layer_kind(layer));
        }
    }
    Ok((x, nodes))
}

fn layer_kind(layer: &LayerSpec) -> &'static str {
    match layer {
        LayerSpec::Dense { .. } => "dense",
        LayerSpec::Conv2d { .. } => "conv2d",
        LayerSpec::Relu => "relu",
        LayerSpec::OdeBlock { .. } => "ode_block",
        LayerSpec::Concat { .. } => "concat",
    }
}

/// Returns the gradient with respect to the spec input when `want_input`,
/// or when a nested block needs it to continue the chain.
fn back(
    spec: &NetworkSpec,
    params: &ParamStore,
    base: usize,
    nodes: &[Node],
    mut g: Tensor,
    grads: &mut ParamStore,
    want_input: bool,
) -> Result<Option<Tensor>> {
    let offsets = param_offsets(spec, base);
    for (idx, ((layer, node), &p)) in spec.layers.iter().zip(nodes).zip(&offsets).enumerate().rev() {
        let need_input = want_input || idx > 0;
        match (layer, node) {
            (LayerSpec::Dense { .. }, Node::Dense { input }) => {
                let (gw, rest) = split_pair(grads, p);
                dense_backward_params(input, &g, gw, rest);
                if need_input {
                    g = dense_backward_input(params.tensor(p), &g, input.shape());
                }
            }
            (LayerSpec::Conv2d { padding, .. }, Node::Conv { input }) => {
                let w = params.tensor(p);
                let (gw, gb) = split_pair(grads, p);
                g = conv_backward(input, w, &g, *padding, gw, gb, need_input);
            }
            (LayerSpec::Relu, Node::Relu { active }) => {
                for (v, &on) in g.data_mut().iter_mut().zip(active) {
                    if !on {
                        *v = 0.0;
                    }
                }
            }
            (LayerSpec::OdeBlock { inner, step_size, .. }, Node::Ode { steps }) => {
                for inner_nodes in steps.iter().rev() {
                    let mut gf = g.clone();
                    gf.scale_assign(*step_size);
                    let gx = back(inner, params, p, inner_nodes, gf, grads, true)?.expect("requested");
                    g.add_assign(&gx);
                }
            }
            (LayerSpec::Concat { branch_a, branch_b }, Node::Concat { a, b }) => {
                let a_out: usize = branch_a.output_shape()?.iter().product();
                let b_out: usize = branch_b.output_shape()?.iter().product();
                let data = g.into_data();
                let ga = Tensor::new(branch_a.output_shape()?, data[..a_out].to_vec())?;
                let gb = Tensor::new(branch_b.output_shape()?, data[a_out..a_out + b_out].to_vec())?;
                let b_base = p + branch_a.tensor_counts().iter().sum::<usize>();
                let ia = back(branch_a, params, p, a, ga, grads, need_input)?;
                let ib = back(branch_b, params, b_base, b, gb, grads, need_input)?;
                g = match (ia, ib) {
                    (Some(ia), Some(ib)) => {
                        let mut joined = ia.into_data();
                        joined.extend_from_slice(ib.data());
                        let shape = if idx == 0 { spec.input_shape.clone() } else { spec.shapes()?[idx].clone() };
                        Tensor::new(shape, joined)?
                    }
                    _ => Tensor::zeros(&[1]),
                };
            }
            _ => bail!(Usage, "tape does not match the network layers"),
        }
    }
    Ok(want_input.then_some(g))
}

fn split_pair(grads: &mut ParamStore, p: usize) -> (&mut Tensor, &mut Tensor) {
    let (lo, hi) = grads.tensors_mut().split_at_mut(p + 1);
    (&mut lo[p], &mut hi[0])
}

fn dense_forward(x: &Tensor, w: &Tensor, b: &Tensor) -> Tensor {
    let n_in = w.shape()[1];
    let xs = x.data();
    let out = w
        .data()
        .chunks_exact(n_in)
        .zip(b.data())
        .map(|(row, bias)| bias + row.iter().zip(xs).map(|(a, c)| a * c).sum::<f64>())
        .collect();
    Tensor::from_vec(out)
}

fn dense_backward_params(x: &Tensor, g: &Tensor, gw: &mut Tensor, gb: &mut Tensor) {
    let n_in = x.len();
    for ((row, &go), gbv) in gw.data_mut().chunks_exact_mut(n_in).zip(g.data()).zip(gb.data_mut()) {
        *gbv += go;
        if go != 0.0 {
            for (r, xv) in row.iter_mut().zip(x.data()) {
                *r += go * xv;
            }
        }
    }
}

fn dense_backward_input(w: &Tensor, g: &Tensor, input_shape: &[usize]) -> Tensor {
    let n_in = w.shape()[1];
    let mut gx = vec![0.0; n_in];
    for (row, &go) in w.data().chunks_exact(n_in).zip(g.data()) {
        if go != 0.0 {
            for (acc, wv) in gx.iter_mut().zip(row) {
                *acc += go * wv;
            }
        }
    }
    Tensor::new(input_shape.to_vec(), gx).expect("input shape matches weight")
}

/// Output columns `ox` whose input column `ox + kx - pad` lies in `0..width`.
#[inline]
fn valid_cols(kx: usize, pad: usize, width: usize, out_width: usize) -> (usize, usize) {
    let lo = pad.saturating_sub(kx);
    let hi = (width + pad).saturating_sub(kx).min(out_width);
    (lo, hi.max(lo))
}

fn conv_forward(x: &Tensor, w: &Tensor, b: &Tensor, padding: [usize; 2]) -> Tensor {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ws = w.shape();
    let (oc, kh, kw) = (ws[0], ws[2], ws[3]);
    let oh = h + 2 * padding[0] + 1 - kh;
    let ow = wd + 2 * padding[1] + 1 - kw;
    let mut out = vec![0.0; oc * oh * ow];
    let xd = x.data();
    let wdat = w.data();
    for o in 0..oc {
        let out_o = &mut out[o * oh * ow..(o + 1) * oh * ow];
        out_o.fill(b.data()[o]);
        for i in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let wv = wdat[((o * c + i) * kh + ky) * kw + kx];
                    let (x0, x1) = valid_cols(kx, padding[1], wd, ow);
                    for y in 0..oh {
                        let Some(iy) = (y + ky).checked_sub(padding[0]).filter(|&v| v < h) else {
                            continue;
                        };
                        let in_row = &xd[(i * h + iy) * wd..(i * h + iy + 1) * wd];
                        let out_row = &mut out_o[y * ow..(y + 1) * ow];
                        let shift = kx as isize - padding[1] as isize;
                        let src = &in_row[(x0 as isize + shift) as usize..(x1 as isize + shift) as usize];
                        for (dst, s) in out_row[x0..x1].iter_mut().zip(src) {
                            *dst += wv * s;
                        }
                    }
                }
            }
        }
    }
    Tensor::new(vec![oc, oh, ow], out).expect("conv output shape")
}

#[allow(clippy::too_many_arguments)]
fn conv_backward(
    x: &Tensor,
    w: &Tensor,
    g: &Tensor,
    padding: [usize; 2],
    gw: &mut Tensor,
    gb: &mut Tensor,
    need_input: bool,
) -> Tensor {
    let (c, h, wd) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ws = w.shape();
    let (oc, kh, kw) = (ws[0], ws[2], ws[3]);
    let (oh, ow) = (g.shape()[1], g.shape()[2]);
    let xd = x.data();
    let gd = g.data();
    let wdat = w.data();
    let mut gx = if need_input { vec![0.0; c * h * wd] } else { Vec::new() };
    let gw_d = gw.data_mut();
    for o in 0..oc {
        let g_o = &gd[o * oh * ow..(o + 1) * oh * ow];
        gb.data_mut()[o] += g_o.iter().sum::<f64>();
        for i in 0..c {
            for ky in 0..kh {
                for kx in 0..kw {
                    let widx = ((o * c + i) * kh + ky) * kw + kx;
                    let wv = wdat[widx];
                    let (x0, x1) = valid_cols(kx, padding[1], wd, ow);
                    let shift = kx as isize - padding[1] as isize;
                    let (lo, hi) = ((x0 as isize + shift) as usize, (x1 as isize + shift) as usize);
                    let mut acc = 0.0;
                    for y in 0..oh {
                        let Some(iy) = (y + ky).checked_sub(padding[0]).filter(|&v| v < h) else {
                            continue;
                        };
                        let g_row = &g_o[y * ow + x0..y * ow + x1];
                        let row_start = (i * h + iy) * wd;
                        acc += g_row.iter().zip(&xd[row_start + lo..row_start + hi]).map(|(a, b)| a * b).sum::<f64>();
                        if need_input {
                            for (dst, gv) in gx[row_start + lo..row_start + hi].iter_mut().zip(g_row) {
                                *dst += wv * gv;
                            }
                        }
                    }
                    gw_d[widx] += acc;
                }
            }
        }
    }
    if need_input {
        Tensor::new(vec![c, h, wd], gx).expect("conv input shape")
    } else {
        Tensor::zeros(&[1])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::boxed::Box;

    fn small_net() -> NetworkSpec {
        NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 4), LayerSpec::Relu, LayerSpec::dense(4, 2)])
    }

    #[test]
    fn empty_spec_is_identity() {
        let spec = NetworkSpec::new(vec![2, 3], vec![]);
        let params = ParamStore::init(&spec, 0).unwrap();
        let x = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        assert_eq!(forward(&spec, &params, &x).unwrap().0, x);
    }

    #[test]
    fn zero_dense_gives_zero() {
        let spec = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 2)]);
        let mut params = ParamStore::init(&spec, 1).unwrap();
        for t in params.tensors_mut() {
            t.scale_assign(0.0);
        }
        let (y, _) = forward(&spec, &params, &Tensor::from_vec(vec![1.0, 2.0, 3.0])).unwrap();
        assert_eq!(y.data(), &[0.0, 0.0]);
    }

    #[test]
    fn forward_is_deterministic() {
        let spec = small_net();
        let params = ParamStore::init(&spec, 5).unwrap();
        let x = Tensor::from_vec(vec![0.1, -0.4, 0.9]);
        assert_eq!(forward(&spec, &params, &x).unwrap().0, forward(&spec, &params, &x).unwrap().0);
    }

    #[test]
    fn wrong_input_shape_is_config_error() {
        let spec = small_net();
        let params = ParamStore::init(&spec, 5).unwrap();
        let err = forward(&spec, &params, &Tensor::from_vec(vec![1.0; 4])).unwrap_err();
        assert!(matches!(err, crate::Error::Config(_)));
    }

    #[test]
    fn zero_loss_gradient_gives_zero_grads() {
        let spec = small_net();
        let params = ParamStore::init(&spec, 2).unwrap();
        let (_, tape) = forward(&spec, &params, &Tensor::from_vec(vec![0.3, 0.2, -0.1])).unwrap();
        let grads = backward(&spec, &params, &tape, &Tensor::zeros(&[2])).unwrap();
        assert_eq!(grads.params.l2_norm(), 0.0);
        assert_eq!(grads.input.sum_sq(), 0.0);
    }

    #[test]
    fn stale_tape_rejected() {
        let spec = small_net();
        let mut params = ParamStore::init(&spec, 2).unwrap();
        let (_, tape) = forward(&spec, &params, &Tensor::from_vec(vec![0.3, 0.2, -0.1])).unwrap();
        params.tensors_mut()[0].data_mut()[0] += 1.0;
        assert!(matches!(backward(&spec, &params, &tape, &Tensor::zeros(&[2])), Err(crate::Error::Usage(_))));
        let other = NetworkSpec::new(vec![3], vec![LayerSpec::dense(3, 2)]);
        let other_params = ParamStore::init(&other, 0).unwrap();
        assert!(backward(&other, &other_params, &tape, &Tensor::zeros(&[2])).is_err());
    }

    #[test]
    fn zero_ode_block_is_identity() {
        let inner = NetworkSpec::new(vec![4], vec![LayerSpec::dense(4, 4)]);
        let spec = NetworkSpec::new(
            vec![4],
            vec![LayerSpec::OdeBlock { inner: Box::new(inner), steps: 3, step_size: 0.7 }],
        );
        let mut params = ParamStore::init(&spec, 0).unwrap();
        for t in params.tensors_mut() {
            t.scale_assign(0.0);
        }
        let x = Tensor::from_vec(vec![1.0, -2.0, 0.5, 4.0]);
        let (y, tape) = forward(&spec, &params, &x).unwrap();
        assert_eq!(y, x);
        let g = Tensor::from_vec(vec![0.1, 0.2, 0.3, 0.4]);
        let back = backward(&spec, &params, &tape, &g).unwrap();
        assert_eq!(back.input, g);
    }

    #[test]
    fn conv_matches_direct_sum() {
        let spec = NetworkSpec::new(vec![2, 3, 5], vec![LayerSpec::conv(2, 3, [3, 2], [1, 1])]);
        let params = ParamStore::init(&spec, 9).unwrap();
        let x = Tensor::new(vec![2, 3, 5], (0..30).map(|v| (v as f64 * 0.37).sin()).collect()).unwrap();
        let (y, _) = forward(&spec, &params, &x).unwrap();
        assert_eq!(y.shape(), &[3, 3, 6]);
        let w = params.tensors()[0].data();
        let b = params.tensors()[1].data();
        for o in 0..3 {
            for oy in 0..3 {
                for ox in 0..6 {
                    let mut s = b[o];
                    for i in 0..2 {
                        for ky in 0..3 {
                            for kx in 0..2 {
                                let iy = oy as isize + ky as isize - 1;
                                let ix = ox as isize + kx as isize - 1;
                                if (0..3).contains(&iy) && (0..5).contains(&ix) {
                                    s += w[((o * 2 + i) * 3 + ky) * 2 + kx] * x.data()[(i * 3 + iy as usize) * 5 + ix as usize];
                                }
                            }
                        }
                    }
                    assert!((y.data()[(o * 3 + oy) * 6 + ox] - s).abs() < 1e-12);
                }
            }
        }
    }
}
