use atkd_core::{HiddenStack, Tensor};
use ndarray::{Array1, Array2, Axis};

use crate::error::{ModelError, Result};
use crate::forward::{to_array, ForwardTrace};
use crate::params::{Params, ToyTransducer};

fn one_minus_sq(a: &Array2<f64>) -> Array2<f64> {
    a.mapv(|x| 1.0 - x * x)
}

/// Parameter gradients for upstream gradients on the joint logits and on
/// any hidden layer.
///
/// `grad_hidden` uses the layout of [`ForwardTrace::hidden`]: encoder layers
/// first, then decoder layers. Either upstream may be absent.
pub fn backward(
    model: &ToyTransducer,
    trace: &ForwardTrace,
    grad_logits: Option<&Tensor>,
    grad_hidden: Option<&HiddenStack>,
) -> Result<Params> {
    let p = &model.params;
    let mut g = Params::zeros(&model.config);
    let (t_len, u1) = (trace.t_len(), trace.u_len());
    let n_enc = trace.encoder.len();
    let n_dec = trace.decoder.len();

    let mut enc_up: Vec<Array2<f64>> = trace.encoder.iter().map(|c| Array2::zeros(c.h2.raw_dim())).collect();
    let mut dec_up: Vec<Array2<f64>> = trace.decoder.iter().map(|c| Array2::zeros(c.h.raw_dim())).collect();

    if let Some(gh) = grad_hidden {
        trace.hidden().check_compatible(gh)?;
        for (i, t) in gh.layers.iter().enumerate() {
            let a = to_array(t)?;
            if i < n_enc {
                enc_up[i] += &a;
            } else {
                dec_up[i - n_enc] += &a;
            }
        }
    }

    if let Some(gl) = grad_logits {
        if gl.shape() != trace.logits().shape() {
            return Err(ModelError::Shape(format!(
                "logit gradient {:?} vs logits {:?}",
                gl.shape(),
                trace.logits().shape()
            )));
        }
        let v = gl.shape()[2];
        let gl = Array2::from_shape_vec((t_len * u1, v), gl.data().to_vec()).expect("shape checked");
        let z = &trace.joint_act;
        g.output.w = z.t().dot(&gl);
        g.output.b = gl.sum_axis(Axis(0));
        let ga = gl.dot(&p.output.w.t()) * one_minus_sq(z);
        g.joint_bias = ga.sum_axis(Axis(0));
        let d = ga.ncols();
        let mut g_enc = Array2::<f64>::zeros((t_len, d));
        let mut g_dec = Array2::<f64>::zeros((u1, d));
        for t in 0..t_len {
            for u in 0..u1 {
                let row = ga.row(t * u1 + u);
                let mut e = g_enc.row_mut(t);
                e += &row;
                let mut dd = g_dec.row_mut(u);
                dd += &row;
            }
        }
        let enc_out = &trace.encoder[n_enc - 1].h2;
        let dec_out = &trace.decoder[n_dec - 1].h;
        g.joint_enc = enc_out.t().dot(&g_enc);
        g.joint_dec = dec_out.t().dot(&g_dec);
        enc_up[n_enc - 1] += &g_enc.dot(&p.joint_enc.t());
        dec_up[n_dec - 1] += &g_dec.dot(&p.joint_dec.t());
    }

    // decoder: backprop through time, top layer first
    let mut carry_down: Option<Array2<f64>> = None;
    for j in (0..n_dec).rev() {
        let c = &trace.decoder[j];
        let layer = &p.decoder[j];
        let mut gh_out = std::mem::replace(&mut dec_up[j], Array2::zeros((0, 0)));
        if let Some(extra) = carry_down.take() {
            gh_out += &extra;
        }
        let d = layer.wh.nrows();
        let mut gx = Array2::zeros(c.x_in.raw_dim());
        let mut carry = Array1::<f64>::zeros(d);
        let gl = &mut g.decoder[j];
        for u in (0..u1).rev() {
            let h = c.h.row(u);
            let gh = &gh_out.row(u) + &carry;
            let ga = &gh * &h.mapv(|x| 1.0 - x * x);
            let x = c.x_in.row(u);
            gl.wx += &outer(&x.to_owned(), &ga);
            if u > 0 {
                gl.wh += &outer(&c.h.row(u - 1).to_owned(), &ga);
            }
            gl.b += &ga;
            gx.row_mut(u).assign(&ga.dot(&layer.wx.t()));
            carry = ga.dot(&layer.wh.t());
        }
        carry_down = Some(gx);
    }
    let g_emb = carry_down.expect("at least one decoder layer");
    for (u, &tok) in trace.history.iter().enumerate() {
        let mut row = g.embedding.row_mut(tok);
        row += &g_emb.row(u);
    }

    // encoder, top layer first
    let scale = 1.0 / (p.input.w.ncols() as f64).sqrt();
    let mut g_below: Option<Array2<f64>> = None;
    for l in (0..n_enc).rev() {
        let c = &trace.encoder[l];
        let layer = &p.encoder[l];
        let gl = &mut g.encoder[l];
        let mut gh2 = std::mem::replace(&mut enc_up[l], Array2::zeros((0, 0)));
        if let Some(extra) = g_below.take() {
            gh2 += &extra;
        }
        // h2 = h1 + f1·W2 + b2,  f1 = tanh(h1·W1 + b1)
        gl.ff2.w = c.f1.t().dot(&gh2);
        gl.ff2.b = gh2.sum_axis(Axis(0));
        let gp1 = gh2.dot(&layer.ff2.w.t()) * one_minus_sq(&c.f1);
        gl.ff1.w = c.h1.t().dot(&gp1);
        gl.ff1.b = gp1.sum_axis(Axis(0));
        let gh1 = &gh2 + &gp1.dot(&layer.ff1.w.t());
        // h1 = h + ctx·Wo,  ctx = attn·v
        gl.wo = c.ctx.t().dot(&gh1);
        let gctx = gh1.dot(&layer.wo.t());
        let gattn = gctx.dot(&c.v.t());
        let gv = c.attn.t().dot(&gctx);
        // row softmax; masked entries have attn = 0 and get no gradient
        let row_dot = (&gattn * &c.attn).sum_axis(Axis(1)).insert_axis(Axis(1));
        let gs = &c.attn * &(&gattn - &row_dot) * scale;
        let gq = gs.dot(&c.k);
        let gk = gs.t().dot(&c.q);
        gl.wq = c.h_in.t().dot(&gq);
        gl.wk = c.h_in.t().dot(&gk);
        gl.wv = c.h_in.t().dot(&gv);
        let gh = gh1 + gq.dot(&layer.wq.t()) + gk.dot(&layer.wk.t()) + gv.dot(&layer.wv.t());
        g_below = Some(gh);
    }
    let gh0 = g_below.expect("at least one encoder layer");
    g.input.w = trace.x.t().dot(&gh0);
    g.input.b = gh0.sum_axis(Axis(0));
    Ok(g)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let a2 = a.view().insert_axis(Axis(1));
    let b2 = b.view().insert_axis(Axis(0));
    a2.dot(&b2)
}
