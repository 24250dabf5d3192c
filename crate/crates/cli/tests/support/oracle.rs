//! Straight-line reference scorer, written without the library's helpers.
//!
//! Mirrors the documented semantics: floored softmax (clamp, then divide by the
//! new total), Full confidence gate, image stream from Full and/or IMG, KL or JS
//! disagreement, adaptive context weight, three-term score, lowest-index argmax.

pub struct Knobs {
    pub tau: f64,
    pub alpha: f64,
    pub lambda_kl: f64,
    pub beta: f64,
    pub js: bool,
    /// 0 = IMG only, 1 = Full only, 2 = Full + IMG.
    pub stream: u8,
    pub gate: bool,
    pub context: bool,
    pub adaptive: bool,
    pub prior: bool,
}

#[derive(Debug)]
pub struct Outcome {
    pub chosen: usize,
    pub gated: bool,
    pub m: f64,
    pub d: f64,
    pub alpha_i: f64,
    pub scores: Vec<f64>,
}

pub const FLOOR: f64 = 1e-12;

pub fn probs(z: &[f64]) -> Vec<f64> {
    let mut top = z[0];
    for &x in z {
        if x > top {
            top = x;
        }
    }
    let mut e = Vec::new();
    let mut total = 0.0;
    for &x in z {
        let v = (x - top).exp();
        e.push(v);
        total += v;
    }
    let mut p = Vec::new();
    let mut total2 = 0.0;
    for v in e {
        let q = (v / total).max(FLOOR);
        p.push(q);
        total2 += q;
    }
    for q in p.iter_mut() {
        *q /= total2;
    }
    p
}

fn first_max(v: &[f64]) -> usize {
    let mut best = 0;
    for i in 1..v.len() {
        if v[i] > v[best] {
            best = i;
        }
    }
    best
}

fn kl(p: &[f64], q: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..p.len() {
        s += p[i] * (p[i] / q[i]).ln();
    }
    s
}

pub fn decide(q: &[f64], ctx: &[f64], img: &[f64], full: &[f64], k: &Knobs) -> Outcome {
    let p_full = probs(full);
    let p_img_view = probs(img);
    let p_ctx = probs(ctx);
    let p_q = probs(q);
    let base = first_max(&p_full);
    let m = p_full[base];

    let alpha_i = if !k.context {
        0.0
    } else if k.adaptive {
        f64::NAN // filled in below
    } else {
        k.alpha
    };

    if k.gate && m >= k.tau {
        // D is reported as 0 when gated, so the adaptive weight is just alpha
        let a = if alpha_i.is_nan() { k.alpha } else { alpha_i };
        return Outcome {
            chosen: base,
            gated: true,
            m,
            d: 0.0,
            alpha_i: a,
            scores: vec![],
        };
    }

    let p_img: Vec<f64> = match k.stream {
        0 => p_img_view.clone(),
        1 => p_full.clone(),
        _ => {
            let mut s = 0.0;
            for i in 0..full.len() {
                s += p_full[i] + p_img_view[i];
            }
            (0..full.len())
                .map(|i| (p_full[i] + p_img_view[i]) / s)
                .collect()
        }
    };
    let d = if k.js {
        let mid: Vec<f64> = (0..p_img.len())
            .map(|i| 0.5 * (p_img[i] + p_ctx[i]))
            .collect();
        0.5 * kl(&p_img, &mid) + 0.5 * kl(&p_ctx, &mid)
    } else {
        kl(&p_img, &p_ctx)
    }
    .max(0.0);
    let alpha_i = if alpha_i.is_nan() {
        k.alpha * (1.0 + k.lambda_kl * d)
    } else {
        alpha_i
    };
    let beta = if k.prior { k.beta } else { 0.0 };

    if !k.context && !k.prior {
        return Outcome {
            chosen: base,
            gated: false,
            m,
            d,
            alpha_i,
            scores: vec![],
        };
    }
    let scores: Vec<f64> = (0..p_img.len())
        .map(|i| p_img[i].ln() - alpha_i * p_ctx[i].ln() - beta * p_q[i].ln())
        .collect();
    Outcome {
        chosen: first_max(&scores),
        gated: false,
        m,
        d,
        alpha_i,
        scores,
    }
}
