use mmwave_bf::beamformers::Architecture;
use mmwave_bf::experiments::{sweep, AsymptoticPzfGee, Axis, ScenarioConfig};
use mmwave_bf::optimize::{alternating_gee_max, AlternatingOptions};

#[test]
fn hybrid_designs_do_not_beat_their_digital_targets() {
    let cfg = ScenarioConfig {
        k_users: 4,
        m_streams: 2,
        n_t: 32,
        n_r: 8,
        trials: 200,
        architectures: vec![Architecture::CmFd, Architecture::CmHy, Architecture::PzfFd, Architecture::PzfHy],
        ..Default::default()
    };
    let r = sweep(&cfg, Axis::NT, &[32.0]).unwrap();
    let ase: Vec<f64> = r.stats[0].iter().map(|s| s.ase_mean).collect();
    assert!(ase[1] <= 1.005 * ase[0], "CM-HY {} vs CM-FD {}", ase[1], ase[0]);
    assert!(ase[3] <= 1.005 * ase[2], "PZF-HY {} vs PZF-FD {}", ase[3], ase[2]);
}

#[test]
fn large_array_pzf_gee_peaks_inside_the_antenna_grid() {
    let cfg = ScenarioConfig { k_users: 4, m_streams: 1, n_t: 100, n_r: 30, trials: 100, ..Default::default() };
    let obj = AsymptoticPzfGee::new(&cfg).unwrap();
    let grid = [8, 16, 24, 32, 48, 64, 80, 96, 112, 128, 160, 192, 256];
    let r = alternating_gee_max(&obj, &grid, &[30], (1e-4, 10.0), &AlternatingOptions::default()).unwrap();
    assert!(r.n_t > grid[0] && r.n_t < grid[grid.len() - 1], "N_T = {}", r.n_t);
}

/// Beams whose sines are uniform on (-1, 1) see the same mean overlap from
/// every other user, which is the setting where the many-user limit is exact.
#[test]
fn many_user_limit_matches_interference_limited_sum() {
    use mmwave_bf::asymptotics::{an_dl_large_k_limit, an_dl_limit_m1, SingleBeamLimit};
    use mmwave_bf::channel::{steering_overlap, ChannelRealization, LinkDims, PathComponent};
    use mmwave_bf::metrics::NoiseModel;
    use mmwave_bf::rng::substream;
    use nalgebra::Complex;
    use rand::Rng;

    let (users, n_t) = (200, 8);
    let dims = LinkDims { n_r: 4, n_t };
    let mut rng = substream(7, &[]);
    let mut angle = move || rng.random_range(-1.0f64..1.0).asin();

    let samples = 200_000;
    let e: f64 = (0..samples).map(|_| steering_overlap(angle(), angle(), n_t).unwrap().norm_sqr()).sum::<f64>()
        / samples as f64;

    let draws = 20;
    let mut finite = 0.0;
    for _ in 0..draws {
        let channels: Vec<_> = (0..users)
            .map(|_| {
                let path = PathComponent {
                    gain: Complex::new(1.0, 0.0),
                    aod_rad: angle(),
                    aoa_rad: angle(),
                    path_loss_linear: 1.0,
                    cluster_index: 0,
                    is_los: false,
                };
                ChannelRealization::from_paths(vec![path], dims, 1, 1, 50.0).unwrap()
            })
            .collect();
        let sel = vec![0; users];
        finite += an_dl_limit_m1(&channels, &sel, SingleBeamLimit::NrInfNoiseFree, 1.0, &NoiseModel::default()).unwrap();
    }
    finite /= draws as f64;
    let limit = an_dl_large_k_limit(e).unwrap();
    let gap = (finite - limit).abs() / limit;
    assert!(gap < 0.05, "finite {finite}, limit {limit}, gap {gap}");
}
