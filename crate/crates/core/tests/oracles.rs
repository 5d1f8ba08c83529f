//! Layer kernels against direct loop implementations.

use rand::Rng as _;
use smilenet_core::nn::ops::{
    conv_backward, conv_forward, dense_backward, dense_forward, maxpool_backward, maxpool_forward,
};
use smilenet_core::{seeded, Rng, Tensor};

const TOL: f64 = 1e-12;

fn rand_t(shape: &[usize], rng: &mut Rng) -> Tensor {
    Tensor::random_uniform(shape, 1.0, rng).unwrap()
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

struct Case {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    maps: usize,
    kh: usize,
    kw: usize,
}

fn random_case(rng: &mut Rng) -> Case {
    let h = rng.random_range(1..=16);
    let w = rng.random_range(1..=16);
    Case {
        n: rng.random_range(1..=3),
        c: rng.random_range(1..=3),
        h,
        w,
        maps: rng.random_range(1..=4),
        kh: rng.random_range(1..=h.min(5)),
        kw: rng.random_range(1..=w.min(5)),
    }
}

#[test]
fn conv_forward_matches_loops() {
    let mut rng = seeded(100);
    for _ in 0..200 {
        let Case { n, c, h, w, maps, kh, kw } = random_case(&mut rng);
        let x = rand_t(&[n, c, h, w], &mut rng);
        let k = rand_t(&[maps, c, kh, kw], &mut rng);
        let b = rand_t(&[maps], &mut rng);
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let mut want = Vec::new();
        for s in 0..n {
            for m in 0..maps {
                for i in 0..oh {
                    for j in 0..ow {
                        let mut acc = b.data()[m];
                        for ch in 0..c {
                            for a in 0..kh {
                                for e in 0..kw {
                                    acc += k.get(&[m, ch, a, e]) * x.get(&[s, ch, i + a, j + e]);
                                }
                            }
                        }
                        want.push(acc);
                    }
                }
            }
        }
        let got = conv_forward(&k, &b, &x).unwrap();
        assert_eq!(got.shape(), &[n, maps, oh, ow]);
        assert!(max_diff(got.data(), &want) <= TOL);
    }
}

#[test]
fn conv_backward_matches_loops() {
    let mut rng = seeded(101);
    for _ in 0..100 {
        let Case { n, c, h, w, maps, kh, kw } = random_case(&mut rng);
        let (oh, ow) = (h - kh + 1, w - kw + 1);
        let x = rand_t(&[n, c, h, w], &mut rng);
        let k = rand_t(&[maps, c, kh, kw], &mut rng);
        let d = rand_t(&[n, maps, oh, ow], &mut rng);
        let g = conv_backward(&k, &x, &d, true).unwrap();

        let mut dk = vec![0.0; maps * c * kh * kw];
        let mut db = vec![0.0; maps];
        let mut dx = vec![0.0; n * c * h * w];
        for s in 0..n {
            for m in 0..maps {
                for i in 0..oh {
                    for j in 0..ow {
                        let dv = d.get(&[s, m, i, j]);
                        db[m] += dv;
                        for ch in 0..c {
                            for a in 0..kh {
                                for e in 0..kw {
                                    dk[k.offset(&[m, ch, a, e])] += dv * x.get(&[s, ch, i + a, j + e]);
                                    dx[x.offset(&[s, ch, i + a, j + e])] += dv * k.get(&[m, ch, a, e]);
                                }
                            }
                        }
                    }
                }
            }
        }
        assert!(max_diff(g.kernels.data(), &dk) <= 1e-11);
        assert!(max_diff(g.bias.data(), &db) <= 1e-11);
        assert!(max_diff(g.input.unwrap().data(), &dx) <= 1e-11);
    }
}

#[test]
fn maxpool_matches_loops_and_routes_gradients() {
    let mut rng = seeded(102);
    for _ in 0..200 {
        let (p, h, w) = (rng.random_range(1..=4), rng.random_range(2..=16), rng.random_range(2..=16));
        let x = rand_t(&[p, h, w], &mut rng);
        let (out, arg) = maxpool_forward(&x).unwrap();
        assert_eq!(out.shape(), &[p, h / 2, w / 2]);
        let mut want = Vec::new();
        for q in 0..p {
            for i in 0..h / 2 {
                for j in 0..w / 2 {
                    let mut m = f64::NEG_INFINITY;
                    for a in 0..2 {
                        for e in 0..2 {
                            m = m.max(x.get(&[q, 2 * i + a, 2 * j + e]));
                        }
                    }
                    want.push(m);
                }
            }
        }
        assert_eq!(out.data(), &want[..]);

        let d = rand_t(out.shape(), &mut rng);
        let back = maxpool_backward(&d, &arg, x.shape()).unwrap();
        let mut routed = vec![0.0; x.len()];
        for (o, &src) in arg.iter().enumerate() {
            assert_eq!(x.data()[src], out.data()[o]);
            routed[src] += d.data()[o];
        }
        assert_eq!(back.data(), &routed[..]);
    }
}

#[test]
fn maxpool_ties_pick_the_first_element() {
    let x = Tensor::filled(&[1, 2, 2], 0.5).unwrap();
    let (_, arg) = maxpool_forward(&x).unwrap();
    assert_eq!(arg, vec![0]);
}

#[test]
fn matmul_and_dense_match_loops() {
    let mut rng = seeded(103);
    for _ in 0..100 {
        let (n, i, o) = (rng.random_range(1..=6), rng.random_range(1..=9), rng.random_range(1..=7));
        let a = rand_t(&[n, i], &mut rng);
        let b = rand_t(&[i, o], &mut rng);
        let mut want = vec![0.0; n * o];
        for r in 0..n {
            for c in 0..o {
                for k in 0..i {
                    want[r * o + c] += a.get(&[r, k]) * b.get(&[k, c]);
                }
            }
        }
        assert!(max_diff(a.matmul(&b).unwrap().data(), &want) <= TOL);

        let wt = rand_t(&[o, i], &mut rng);
        let bias = rand_t(&[o], &mut rng);
        let z = dense_forward(&wt, &bias, &a).unwrap();
        let mut want = vec![0.0; n * o];
        for r in 0..n {
            for c in 0..o {
                want[r * o + c] = bias.data()[c];
                for k in 0..i {
                    want[r * o + c] += wt.get(&[c, k]) * a.get(&[r, k]);
                }
            }
        }
        assert!(max_diff(z.data(), &want) <= TOL);

        let d = rand_t(&[n, o], &mut rng);
        let g = dense_backward(&wt, &a, &d, true).unwrap();
        let dw = d.transpose().unwrap().matmul(&a).unwrap();
        let dx = d.matmul(&wt).unwrap();
        assert!(max_diff(g.weights.data(), dw.data()) <= TOL);
        assert!(max_diff(g.input.unwrap().data(), dx.data()) <= TOL);
        let db: Vec<f64> = (0..o).map(|c| (0..n).map(|r| d.get(&[r, c])).sum()).collect();
        assert!(max_diff(g.bias.data(), &db) <= TOL);
    }
}
