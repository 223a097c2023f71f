//! End-to-end gradient check: world-space Gaussian parameters through
//! projection and alpha blending to an image loss, validated against
//! finite differences of an all-f64 reference pipeline.

use fgs_core::math::{quat_normalize, quat_normalize_backward, rel_err};
use fgs_core::sh::{SH_C0, SH_C1, SH_C2, SH_C3, SH_COEFFS};
use fgs_render::{
    project_backward, project_gaussians, rasterize, rasterize_backward, Camera, GaussianInput,
    RasterizeOptions,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const WIDTH: usize = 16;
const HEIGHT: usize = 16;

#[derive(Clone)]
struct Params {
    position: Vec<[f64; 3]>,
    scale: Vec<[f64; 3]>,
    quat: Vec<[f64; 4]>,
    sh: Vec<[f64; SH_COEFFS]>,
    opacity: Vec<f64>,
}

fn sh_basis_f64(dir: [f64; 3]) -> [f64; 16] {
    let [x, y, z] = dir;
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        f64::from(SH_C0),
        -f64::from(SH_C1) * y,
        f64::from(SH_C1) * z,
        -f64::from(SH_C1) * x,
        f64::from(SH_C2[0]) * x * y,
        f64::from(SH_C2[1]) * y * z,
        f64::from(SH_C2[2]) * (2.0 * zz - xx - yy),
        f64::from(SH_C2[3]) * x * z,
        f64::from(SH_C2[4]) * (xx - yy),
        f64::from(SH_C3[0]) * y * (3.0 * xx - yy),
        f64::from(SH_C3[1]) * x * y * z,
        f64::from(SH_C3[2]) * y * (4.0 * zz - xx - yy),
        f64::from(SH_C3[3]) * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        f64::from(SH_C3[4]) * x * (4.0 * zz - xx - yy),
        f64::from(SH_C3[5]) * z * (xx - yy),
        f64::from(SH_C3[6]) * x * (xx - 3.0 * yy),
    ]
}

/// Projects and blends everything in f64, mirroring the production
/// pipeline with both blending shortcuts disabled.
fn render_f64(cam: &Camera, p: &Params, background: [f64; 3]) -> Vec<f64> {
    let w: [[f64; 3]; 3] =
        std::array::from_fn(|i| std::array::from_fn(|j| f64::from(cam.rotation[i][j])));
    let t: [f64; 3] = cam.translation.map(f64::from);
    let center = cam.center().map(f64::from);
    let (fx, fy) = (f64::from(cam.fx), f64::from(cam.fy));

    struct S64 {
        mean: [f64; 2],
        conic: [f64; 3],
        rgb: [f64; 3],
        opacity: f64,
        depth: f64,
    }
    let mut splats: Vec<S64> = Vec::new();
    for i in 0..p.position.len() {
        let pos = p.position[i];
        let cam_p: [f64; 3] =
            std::array::from_fn(|r| w[r][0] * pos[0] + w[r][1] * pos[1] + w[r][2] * pos[2] + t[r]);
        let [x, y, z] = cam_p;
        assert!(z > f64::from(cam.near), "fixture must keep gaussians in front");
        let j00 = fx / z;
        let j02 = -fx * x / (z * z);
        let j11 = fy / z;
        let j12 = -fy * y / (z * z);
        let mut a = [[0.0f64; 2]; 3];
        for c in 0..3 {
            a[c][0] = j00 * w[0][c] + j02 * w[2][c];
            a[c][1] = j11 * w[1][c] + j12 * w[2][c];
        }
        let qn = p.quat[i].iter().map(|v| v * v).sum::<f64>().sqrt();
        let [qw, qx, qy, qz] = p.quat[i].map(|v| v / qn);
        let r = [
            [
                1.0 - 2.0 * (qy * qy + qz * qz),
                2.0 * (qx * qy - qw * qz),
                2.0 * (qx * qz + qw * qy),
            ],
            [
                2.0 * (qx * qy + qw * qz),
                1.0 - 2.0 * (qx * qx + qz * qz),
                2.0 * (qy * qz - qw * qx),
            ],
            [
                2.0 * (qx * qz - qw * qy),
                2.0 * (qy * qz + qw * qx),
                1.0 - 2.0 * (qx * qx + qy * qy),
            ],
        ];
        let mut sigma = [[0.0f64; 3]; 3];
        for ii in 0..3 {
            for jj in 0..3 {
                for k in 0..3 {
                    sigma[ii][jj] += r[ii][k] * p.scale[i][k] * r[jj][k] * p.scale[i][k];
                }
            }
        }
        let mut m = [[0.3f64, 0.0], [0.0, 0.3f64]];
        for r0 in 0..2 {
            for r1 in 0..2 {
                for ii in 0..3 {
                    for jj in 0..3 {
                        m[r0][r1] += a[ii][r0] * sigma[ii][jj] * a[jj][r1];
                    }
                }
            }
        }
        let det = m[0][0] * m[1][1] - m[0][1] * m[0][1];
        let v: [f64; 3] = std::array::from_fn(|c| pos[c] - center[c]);
        let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let basis = sh_basis_f64([v[0] / n, v[1] / n, v[2] / n]);
        let mut rgb = [0.5f64; 3];
        for ch in 0..3 {
            for (k, b) in basis.iter().enumerate() {
                rgb[ch] += p.sh[i][k * 3 + ch] * b;
            }
            assert!(rgb[ch] > 0.01 && rgb[ch] < 0.99, "fixture clamps a color channel");
        }
        splats.push(S64 {
            mean: [fx * x / z + f64::from(cam.cx), fy * y / z + f64::from(cam.cy)],
            conic: [m[1][1] / det, -m[0][1] / det, m[0][0] / det],
            rgb,
            opacity: p.opacity[i],
            depth: z,
        });
    }
    splats.sort_by(|a, b| a.depth.total_cmp(&b.depth));

    let mut image = vec![0.0f64; WIDTH * HEIGHT * 3];
    for py in 0..HEIGHT {
        for px in 0..WIDTH {
            let mut tr = 1.0f64;
            let mut acc = [0.0f64; 3];
            for s in &splats {
                let dx = (px as f64 + 0.5) - s.mean[0];
                let dy = (py as f64 + 0.5) - s.mean[1];
                let q = s.conic[0] * dx * dx + s.conic[2] * dy * dy + 2.0 * s.conic[1] * dx * dy;
                if q < 0.0 {
                    continue;
                }
                let alpha = s.opacity * (-0.5 * q).exp();
                for c in 0..3 {
                    acc[c] += s.rgb[c] * alpha * tr;
                }
                tr *= 1.0 - alpha;
            }
            let o = (py * WIDTH + px) * 3;
            for c in 0..3 {
                image[o + c] = acc[c] + tr * background[c];
            }
        }
    }
    image
}

#[test]
fn world_space_gradients_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(71);
    let cam = Camera::look_at(
        [0.2, -0.3, -2.8],
        [0.0, 0.0, 0.0],
        [0.0, 1.0, 0.0],
        14.0,
        15.0,
        WIDTH,
        HEIGHT,
    )
    .unwrap();
    let count = 6;
    let raws: Vec<[f32; 4]> =
        (0..count).map(|_| std::array::from_fn(|_| rng.gen_range(-1.0f32..1.0))).collect();
    let gaussians: Vec<GaussianInput> = raws
        .iter()
        .map(|&raw| {
            let mut sh = [0.0f32; SH_COEFFS];
            for v in sh.iter_mut() {
                *v = rng.gen_range(-0.04..0.04);
            }
            GaussianInput {
                position: std::array::from_fn(|_| rng.gen_range(-0.5f32..0.5)),
                scale: std::array::from_fn(|_| rng.gen_range(0.1f32..0.45)),
                rotation: quat_normalize(raw),
                sh,
                opacity: rng.gen_range(0.2f32..0.8),
            }
        })
        .collect();
    let options = RasterizeOptions { tile_size: 8, alpha_cutoff: 0.0, transmittance_floor: 0.0 };
    let background = [0.15f32, 0.55, 0.35];

    let mut splats = project_gaussians(&gaussians, &cam, 0.0).unwrap();
    assert_eq!(splats.len(), count, "fixture must keep every gaussian visible");
    let out = rasterize(&mut splats, WIDTH, HEIGHT, background, &options).unwrap();
    let weights: Vec<f32> =
        (0..WIDTH * HEIGHT * 3).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let splat_grads =
        rasterize_backward(&splats, WIDTH, HEIGHT, background, &options, &weights).unwrap();

    // Pull screen-space gradients back to each source Gaussian.
    let mut g_pos = vec![[0.0f32; 3]; count];
    let mut g_scale = vec![[0.0f32; 3]; count];
    let mut g_rot = vec![[0.0f32; 4]; count];
    let mut g_sh = vec![[0.0f32; SH_COEFFS]; count];
    let mut g_op = vec![0.0f32; count];
    for (i, splat) in splats.iter().enumerate() {
        let src = splat.source as usize;
        let pg = project_backward(
            &gaussians[src],
            &cam,
            splat,
            splat_grads.mean2d[i],
            splat_grads.conic[i],
            splat_grads.rgb[i],
            splat_grads.opacity[i],
        );
        for c in 0..3 {
            g_pos[src][c] += pg.position[c];
            g_scale[src][c] += pg.scale[c];
        }
        for c in 0..4 {
            g_rot[src][c] += pg.rotation[c];
        }
        for (dst, v) in g_sh[src].iter_mut().zip(pg.sh) {
            *dst += v;
        }
        g_op[src] += pg.opacity;
    }
    let g_raw: Vec<[f32; 4]> =
        (0..count).map(|i| quat_normalize_backward(raws[i], g_rot[i])).collect();

    let params = Params {
        position: gaussians.iter().map(|g| g.position.map(f64::from)).collect(),
        scale: gaussians.iter().map(|g| g.scale.map(f64::from)).collect(),
        quat: raws.iter().map(|&q| q.map(f64::from)).collect(),
        sh: gaussians
            .iter()
            .map(|g| std::array::from_fn(|k| f64::from(g.sh[k])))
            .collect(),
        opacity: gaussians.iter().map(|g| f64::from(g.opacity)).collect(),
    };
    let bg64 = background.map(f64::from);
    let loss = |p: &Params| -> f64 {
        render_f64(&cam, p, bg64)
            .iter()
            .zip(&weights)
            .map(|(v, w)| v * f64::from(*w))
            .sum()
    };

    // The f32 pipeline must track the f64 reference closely.
    let reference = render_f64(&cam, &params, bg64);
    for (a, b) in out.image.iter().zip(&reference) {
        assert!((f64::from(*a) - b).abs() < 1e-4, "forward mismatch: {a} vs {b}");
    }

    let h = 1e-5;
    let mut checked = 0usize;
    let mut check = |name: String, analytic: f32, fd: f64| {
        assert!(
            rel_err(f64::from(analytic), fd) < 1e-3,
            "{name}: analytic {analytic} vs finite difference {fd}"
        );
        checked += 1;
    };
    for i in 0..count {
        for c in 0..3 {
            let mut hi = params.clone();
            let mut lo = params.clone();
            hi.position[i][c] += h;
            lo.position[i][c] -= h;
            check(
                format!("gaussian {i} position[{c}]"),
                g_pos[i][c],
                (loss(&hi) - loss(&lo)) / (2.0 * h),
            );
            let mut hi = params.clone();
            let mut lo = params.clone();
            hi.scale[i][c] += h;
            lo.scale[i][c] -= h;
            check(
                format!("gaussian {i} scale[{c}]"),
                g_scale[i][c],
                (loss(&hi) - loss(&lo)) / (2.0 * h),
            );
        }
        for c in 0..4 {
            let mut hi = params.clone();
            let mut lo = params.clone();
            hi.quat[i][c] += h;
            lo.quat[i][c] -= h;
            check(
                format!("gaussian {i} quat[{c}]"),
                g_raw[i][c],
                (loss(&hi) - loss(&lo)) / (2.0 * h),
            );
        }
        for k in 0..SH_COEFFS {
            let mut hi = params.clone();
            let mut lo = params.clone();
            hi.sh[i][k] += h;
            lo.sh[i][k] -= h;
            check(
                format!("gaussian {i} sh[{k}]"),
                g_sh[i][k],
                (loss(&hi) - loss(&lo)) / (2.0 * h),
            );
        }
        let mut hi = params.clone();
        let mut lo = params.clone();
        hi.opacity[i] += h;
        lo.opacity[i] -= h;
        check(
            format!("gaussian {i} opacity"),
            g_op[i],
            (loss(&hi) - loss(&lo)) / (2.0 * h),
        );
    }
    assert_eq!(checked, count * (3 + 3 + 4 + SH_COEFFS + 1));
}
