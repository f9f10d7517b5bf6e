mod common;

use common::{max_abs_diff, normal};
use gazemtl::gradcheck::{grad_check, GradCheckConfig};
use gazemtl::nn::{ConvGeometry, Linear};
use gazemtl::{ParamStore, Result, RngStream, StreamKey, Tape, Tensor, Var};

type Objective = Box<dyn Fn(&mut Tape<f64>, &ParamStore<f64>) -> Result<Var>>;

/// `Σ y ⊙ R` for a fixed random `R` of the output's shape.
fn project(tape: &mut Tape<f64>, y: Var, r: &Tensor<f64>) -> Result<Var> {
    let r = tape.constant(r.clone());
    let p = tape.mul(y, r)?;
    Ok(tape.sum(p))
}

/// Runs `trials` randomized finite-difference checks of one primitive.
fn fd_trials(name: &str, trials: usize, build: impl Fn(&mut RngStream, &mut ParamStore<f64>) -> Objective) {
    let cfg = GradCheckConfig::default();
    for t in 0..trials {
        let mut rng = StreamKey::new(2024).named(name).split(t as u64).rng();
        let mut store = ParamStore::new();
        let f = build(&mut rng, &mut store);
        let report = grad_check(&mut store, |tape, s| f(tape, s), &cfg).unwrap();
        assert!(
            report.passed(),
            "{name} trial {t}: max rel error {:e} in {:?}",
            report.max_rel_error(),
            report.failing().map(|p| &p.name).collect::<Vec<_>>()
        );
    }
}

fn unary(op: fn(&mut Tape<f64>, Var) -> Result<Var>) -> impl Fn(&mut RngStream, &mut ParamStore<f64>) -> Objective {
    move |rng, store| {
        let dims = [1 + rng.below(4), 1 + rng.below(5)];
        let x = store.insert("x", normal(rng, &dims)).unwrap();
        let r = normal(rng, &dims);
        Box::new(move |tape, s| {
            let xv = tape.param(s, x);
            let y = op(tape, xv)?;
            let r = if tape.value(y).dims() == r.dims() { r.clone() } else { Tensor::ones(tape.value(y).dims()) };
            project(tape, y, &r)
        })
    }
}

#[test]
fn elementwise_and_reduction_gradients() {
    fd_trials("add", 100, |rng, store| {
        let dims = [1 + rng.below(4), 1 + rng.below(4)];
        let a = store.insert("a", normal(rng, &dims)).unwrap();
        let b = store.insert("b", normal(rng, &dims)).unwrap();
        let r = normal(rng, &dims);
        Box::new(move |tape, s| {
            let (av, bv) = (tape.param(s, a), tape.param(s, b));
            let y = tape.add(av, bv)?;
            let z = tape.mul(y, bv)?;
            let w = tape.sub(z, av)?;
            let w = tape.scale(w, 0.7);
            project(tape, w, &r)
        })
    });
    fd_trials("mean", 100, unary(|t, x| Ok(t.mean(x))));
    fd_trials("row_sum", 100, unary(|t, x| t.reduce(gazemtl::tensor::Reduction::Sum, x, &[1])));
    fd_trials("transpose", 100, unary(|t, x| t.transpose(x)));
    fd_trials("sum_squares", 100, unary(|t, x| Ok(t.sum_squares(x))));
}

#[test]
fn activation_gradients() {
    fd_trials("relu", 100, unary(|t, x| Ok(t.relu(x))));
    fd_trials("gelu", 100, unary(|t, x| Ok(t.gelu(x))));
    fd_trials("softmax", 100, unary(|t, x| t.softmax_rows(x)));
    fd_trials("layer_norm", 100, |rng, store| {
        let dims = [1 + rng.below(4), 2 + rng.below(5)];
        let x = store.insert("x", normal(rng, &dims)).unwrap();
        let r = normal(rng, &dims);
        Box::new(move |tape, s| {
            let xv = tape.param(s, x);
            let y = tape.layer_norm(xv, 1e-5)?;
            project(tape, y, &r)
        })
    });
    fd_trials("instance_norm", 100, |rng, store| {
        let dims = [1 + rng.below(3), 1 + rng.below(3), 2 + rng.below(4)];
        let x = store.insert("x", normal(rng, &dims)).unwrap();
        let r = normal(rng, &dims);
        Box::new(move |tape, s| {
            let xv = tape.param(s, x);
            let y = tape.instance_norm(xv, 1e-5)?;
            project(tape, y, &r)
        })
    });
}

#[test]
fn matmul_and_convolution_gradients() {
    fd_trials("matmul", 100, |rng, store| {
        let (m, k, n) = (1 + rng.below(4), 1 + rng.below(4), 1 + rng.below(4));
        let a = store.insert("a", normal(rng, &[m, k])).unwrap();
        let b = store.insert("b", normal(rng, &[k, n])).unwrap();
        let r = normal(rng, &[m, n]);
        Box::new(move |tape, s| {
            let (av, bv) = (tape.param(s, a), tape.param(s, b));
            let y = tape.matmul(av, bv)?;
            project(tape, y, &r)
        })
    });
    fd_trials("conv2d", 100, |rng, store| {
        let (g, h, w) = common::conv_geometry(rng);
        let (cin, cout) = (1 + rng.below(2), 1 + rng.below(2));
        let x = store.insert("x", normal(rng, &[cin, h, w])).unwrap();
        let k = store.insert("w", normal(rng, &[cout, cin, g.kernel.0, g.kernel.1])).unwrap();
        let b = store.insert("b", normal(rng, &[cout])).unwrap();
        let (ho, wo) = g.conv_output("conv2d", h, w).unwrap();
        let r = normal(rng, &[cout, ho, wo]);
        Box::new(move |tape, s| {
            let (xv, kv, bv) = (tape.param(s, x), tape.param(s, k), tape.param(s, b));
            let y = tape.conv2d(xv, kv, bv, g)?;
            project(tape, y, &r)
        })
    });
    fd_trials("depthwise", 100, |rng, store| {
        let (g, h, w) = common::conv_geometry(rng);
        let (c, m) = (1 + rng.below(2), 1 + rng.below(3));
        let x = store.insert("x", normal(rng, &[c, h, w])).unwrap();
        let k = store.insert("w", normal(rng, &[c * m, 1, g.kernel.0, g.kernel.1])).unwrap();
        let b = store.insert("b", normal(rng, &[c * m])).unwrap();
        let (ho, wo) = g.conv_output("depthwise", h, w).unwrap();
        let r = normal(rng, &[c * m, ho, wo]);
        Box::new(move |tape, s| {
            let (xv, kv, bv) = (tape.param(s, x), tape.param(s, k), tape.param(s, b));
            let y = tape.depthwise_conv2d(xv, kv, bv, m, g)?;
            project(tape, y, &r)
        })
    });
    fd_trials("transposed", 100, |rng, store| {
        let (g, h, w) = common::transposed_geometry(rng);
        let (cin, cout) = (1 + rng.below(2), 1 + rng.below(2));
        let x = store.insert("x", normal(rng, &[cin, h, w])).unwrap();
        let k = store.insert("w", normal(rng, &[cin, cout, g.kernel.0, g.kernel.1])).unwrap();
        let b = store.insert("b", normal(rng, &[cout])).unwrap();
        let (ho, wo) = g.transposed_output("transposed", h, w).unwrap();
        let r = normal(rng, &[cout, ho, wo]);
        Box::new(move |tape, s| {
            let (xv, kv, bv) = (tape.param(s, x), tape.param(s, k), tape.param(s, b));
            let y = tape.transposed_conv(xv, kv, bv, g)?;
            project(tape, y, &r)
        })
    });
    fd_trials("upsample", 100, |rng, store| {
        let dims = [1 + rng.below(2), 1 + rng.below(4), 1 + rng.below(4)];
        let target = (1 + rng.below(7), 1 + rng.below(7));
        let x = store.insert("x", normal(rng, &dims)).unwrap();
        let r = normal(rng, &[dims[0], target.0, target.1]);
        Box::new(move |tape, s| {
            let xv = tape.param(s, x);
            let y = tape.upsample_nearest(xv, target)?;
            project(tape, y, &r)
        })
    });
    fd_trials("mse", 100, |rng, store| {
        let dims = [1 + rng.below(4), 1 + rng.below(4)];
        let a = store.insert("a", normal(rng, &dims)).unwrap();
        let target = normal(rng, &dims);
        Box::new(move |tape, s| {
            let av = tape.param(s, a);
            let t = tape.constant(target.clone());
            tape.mse_loss(av, t)
        })
    });
}

#[test]
fn sum_of_matmul_gradient_is_tight() {
    let mut rng = StreamKey::new(3).rng();
    let mut store = ParamStore::new();
    let a = store.insert("a", normal(&mut rng, &[3, 4])).unwrap();
    let b = store.insert("b", normal(&mut rng, &[4, 2])).unwrap();
    let cfg = GradCheckConfig { tol: 1e-6, ..Default::default() };
    let report = grad_check(
        &mut store,
        |tape, s| {
            let (av, bv) = (tape.param(s, a), tape.param(s, b));
            let c = tape.matmul(av, bv)?;
            Ok(tape.sum(c))
        },
        &cfg,
    )
    .unwrap();
    assert!(report.passed(), "{:e}", report.max_rel_error());
}

#[test]
fn diamond_graph_accumulates_both_paths() {
    // y = sum((x·x) ⊙ relu-free branch (2x + 1)); x feeds both branches
    let x0 = Tensor::from_f64_slice(&[3], &[0.5, -1.5, 2.0]).unwrap();
    let mut tape = Tape::new();
    let x = tape.input(x0.clone());
    let sq = tape.mul(x, x).unwrap();
    let lin = tape.scale(x, 2.0);
    let lin = tape.add_scalar(lin, 1.0);
    let y = tape.mul(sq, lin).unwrap();
    let root = tape.sum(y);
    tape.backward(root).unwrap();
    // d/dx [x²(2x+1)] = 6x² + 2x
    let expected: Vec<f64> = x0.data().iter().map(|v| 6.0 * v * v + 2.0 * v).collect();
    assert!(max_abs_diff(tape.grad(x).data(), &expected) < 1e-12);

    let mut store = ParamStore::new();
    let p = store.insert("x", x0).unwrap();
    let report = grad_check(
        &mut store,
        |tape, s| {
            let x = tape.param(s, p);
            let sq = tape.mul(x, x)?;
            let lin = tape.scale(x, 2.0);
            let lin = tape.add_scalar(lin, 1.0);
            let y = tape.mul(sq, lin)?;
            Ok(tape.sum(y))
        },
        &GradCheckConfig { tol: 1e-6, ..Default::default() },
    )
    .unwrap();
    assert!(report.passed());
}

fn layer_objective(tape: &mut Tape<f64>, store: &ParamStore<f64>, layer: &Linear, x: &Tensor<f64>, r: &Tensor<f64>) -> Var {
    let xv = tape.constant(x.clone());
    let h = layer.forward(tape, store, xv).unwrap();
    let h = tape.gelu(h);
    project(tape, h, r).unwrap()
}

#[test]
fn backward_is_linear_in_the_root() {
    let mut rng = StreamKey::new(21).rng();
    let mut store = ParamStore::<f64>::new();
    let layer = Linear::new(&mut store, "fc", 4, 3, StreamKey::new(1)).unwrap();
    let x = normal(&mut rng, &[5, 4]);
    let (r1, r2) = (normal(&mut rng, &[5, 3]), normal(&mut rng, &[5, 3]));
    let (a, b) = (1.7, -0.4);

    let grads = |root_of: &dyn Fn(&mut Tape<f64>) -> Var| -> Vec<f64> {
        let mut tape = Tape::new();
        let root = root_of(&mut tape);
        tape.backward(root).unwrap();
        let w = tape.param(&store, layer.weight);
        tape.grad(w).into_data()
    };
    let gf = grads(&|t| layer_objective(t, &store, &layer, &x, &r1));
    let gg = grads(&|t| layer_objective(t, &store, &layer, &x, &r2));
    let combined = grads(&|t| {
        let f = layer_objective(t, &store, &layer, &x, &r1);
        let g = layer_objective(t, &store, &layer, &x, &r2);
        let f = t.scale(f, a);
        let g = t.scale(g, b);
        t.add(f, g).unwrap()
    });
    let expected: Vec<f64> = gf.iter().zip(&gg).map(|(f, g)| a * f + b * g).collect();
    assert!(max_abs_diff(&combined, &expected) < 1e-10);
}

#[test]
fn zero_grads_makes_replay_independent_of_history() {
    let mut store = ParamStore::<f64>::new();
    let layer = Linear::new(&mut store, "fc", 3, 2, StreamKey::new(2)).unwrap();
    let x = normal(&mut StreamKey::new(22).rng(), &[4, 3]);
    let r = normal(&mut StreamKey::new(23).rng(), &[4, 2]);
    let pass = |store: &mut ParamStore<f64>| {
        let mut tape = Tape::new();
        let root = layer_objective(&mut tape, store, &layer, &x, &r);
        tape.backward(root).unwrap();
        store.accumulate_grads(&tape).unwrap();
    };
    pass(&mut store);
    let first = store.grad(layer.weight).clone();
    pass(&mut store);
    pass(&mut store);
    store.zero_grads();
    pass(&mut store);
    assert_eq!(store.grad(layer.weight).data(), first.data());
}

#[test]
fn two_layer_perceptron_with_thirty_parameters() {
    let mut store = ParamStore::<f64>::new();
    let l1 = Linear::new(&mut store, "l1", 4, 4, StreamKey::new(3)).unwrap();
    let l2 = Linear::new(&mut store, "l2", 4, 2, StreamKey::new(3)).unwrap();
    assert_eq!(store.num_scalars(), 30);
    let mut rng = StreamKey::new(31).rng();
    for lin in [&l1, &l2] {
        let n = lin.out_features;
        *store.value_mut(lin.bias) = normal(&mut rng, &[n]);
    }
    let x = normal(&mut rng, &[6, 4]);
    let y = normal(&mut rng, &[6, 2]);
    let report = grad_check(
        &mut store,
        |tape, s| {
            let xv = tape.constant(x.clone());
            let h = l1.forward(tape, s, xv)?;
            let h = tape.gelu(h);
            let out = l2.forward(tape, s, h)?;
            let t = tape.constant(y.clone());
            tape.mse_loss(out, t)
        },
        &GradCheckConfig::default(),
    )
    .unwrap();
    assert!(report.max_rel_error() < 1e-5, "{:e}", report.max_rel_error());
}

#[test]
fn convolution_identity_cases() {
    let x = normal(&mut StreamKey::new(41).rng(), &[3, 4, 5]);
    let mut tape = Tape::<f64>::inference();
    let xv = tape.constant(x.clone());
    let mut eye = Tensor::zeros(&[3, 3, 1, 1]);
    for c in 0..3 {
        eye.data_mut()[c * 3 + c] = 1.0;
    }
    let (w, b) = (tape.constant(eye), tape.constant(Tensor::zeros(&[3])));
    let y = tape.conv2d(xv, w, b, ConvGeometry::unit((1, 1))).unwrap();
    assert_eq!(tape.value(y).data(), x.data());
    let (w, b) = (tape.constant(Tensor::ones(&[3, 1, 1, 1])), tape.constant(Tensor::zeros(&[3])));
    let y = tape.depthwise_conv2d(xv, w, b, 1, ConvGeometry::unit((1, 1))).unwrap();
    assert_eq!(tape.value(y).data(), x.data());
}
