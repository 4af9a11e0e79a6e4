use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use msafnet_bench::tensor_f32;
use msafnet_core::model::{total_loss, FusionMode, ModelConfig, ModelInput, MsafNet};
use msafnet_core::nn::ForwardCtx;

/// Narrow late-fusion model on two 5-frame clips at 64x64.
fn narrow_model(c: &mut Criterion) {
    let model = MsafNet::<f32>::new(ModelConfig::narrow(FusionMode::Late, 1));
    let rgb = tensor_f32(&[2, 3, 5, 64, 64], 1, 0.0, 1.0);
    let sem = tensor_f32(&[2, 1, 5, 64, 64], 2, 0.0, 1.0);
    let target = tensor_f32(&[2, 1, 64, 64], 3, 0.01, 1.0);
    let input = ModelInput::Fused { rgb: &rgb, semantic: &sem };
    let mut group = c.benchmark_group("narrow_late_64");
    group.sample_size(10);
    group.bench_function("inference", |b| {
        b.iter(|| black_box(model.forward(&mut ForwardCtx::eval(), input).expect("forward")))
    });
    group.bench_function("loss_and_gradients", |b| {
        b.iter(|| {
            let mut ctx = ForwardCtx::train();
            let pred = model.forward(&mut ctx, input).expect("forward");
            total_loss(&target, &pred).expect("loss").total.backward().expect("backward");
            black_box(ctx.gradients(&model).expect("gradients"))
        })
    });
    group.finish();
}

criterion_group!(benches, narrow_model);
criterion_main!(benches);
