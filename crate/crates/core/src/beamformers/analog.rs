//! Analog beam-steering: columns are array responses at the angles of the
//! strongest, mutually separated propagation paths.

use crate::channel::{ula_response, ChannelRealization};
use crate::error::{invalid, Result};
use crate::scalar::{lit, CMatrix, Real};

/// Default minimum angular separation between selected paths, degrees.
pub const DEFAULT_MIN_SEPARATION_DEG: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct BeamSteering<T: Real> {
    pub precoder: CMatrix<T>,
    pub postcoder: CMatrix<T>,
    /// Indices into `ChannelRealization::paths`, in column order.
    pub selected: Vec<usize>,
    /// Set when fewer than `m` paths met the separation rule and the
    /// strongest unused paths were used instead.
    pub relaxed: bool,
}

/// Greedy path selection in descending strength order.
///
/// A path is accepted when both its departure and its arrival angle differ
/// by at least `min_sep_deg` from those of every accepted path.
pub fn select_paths<T: Real>(h: &ChannelRealization<T>, m: usize, min_sep_deg: f64) -> Result<(Vec<usize>, bool)> {
    if h.paths.is_empty() {
        return invalid("channel has no propagation paths");
    }
    if m == 0 {
        return invalid("stream count must be positive");
    }
    if m > h.paths.len() {
        return invalid(format!("cannot steer {m} beams with {} paths", h.paths.len()));
    }
    let sep: T = lit(min_sep_deg.to_radians());
    let mut chosen: Vec<usize> = Vec::with_capacity(m);
    for (i, p) in h.paths.iter().enumerate() {
        if chosen.len() == m {
            break;
        }
        let clear = chosen.iter().all(|&c| {
            let q = &h.paths[c];
            (p.aod_rad - q.aod_rad).abs() >= sep && (p.aoa_rad - q.aoa_rad).abs() >= sep
        });
        if clear {
            chosen.push(i);
        }
    }
    let relaxed = chosen.len() < m;
    if relaxed {
        for i in 0..h.paths.len() {
            if chosen.len() == m {
                break;
            }
            if !chosen.contains(&i) {
                chosen.push(i);
            }
        }
    }
    Ok((chosen, relaxed))
}

pub fn an_beamsteer<T: Real>(h: &ChannelRealization<T>, m: usize, min_sep_deg: f64) -> Result<BeamSteering<T>> {
    let (selected, relaxed) = select_paths(h, m, min_sep_deg)?;
    let tx = selected
        .iter()
        .map(|&i| ula_response(h.paths[i].aod_rad, h.n_t()))
        .collect::<Result<Vec<_>>>()?;
    let rx = selected
        .iter()
        .map(|&i| ula_response(h.paths[i].aoa_rad, h.n_r()))
        .collect::<Result<Vec<_>>>()?;
    Ok(BeamSteering {
        precoder: CMatrix::from_columns(&tx),
        postcoder: CMatrix::from_columns(&rx),
        selected,
        relaxed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::{LinkDims, PathComponent};
    use nalgebra::Complex;

    fn path(aod_deg: f64, aoa_deg: f64, g: f64) -> PathComponent<f64> {
        PathComponent {
            gain: Complex::new(g, 0.0),
            aod_rad: aod_deg.to_radians(),
            aoa_rad: aoa_deg.to_radians(),
            path_loss_linear: 1.0,
            cluster_index: 0,
            is_los: false,
        }
    }

    fn channel(paths: Vec<PathComponent<f64>>) -> ChannelRealization<f64> {
        let n = paths.len();
        ChannelRealization::from_paths(paths, LinkDims { n_r: 8, n_t: 16 }, 1, n, 1.0).unwrap()
    }

    #[test]
    fn close_departure_angle_skipped() {
        let h = channel(vec![path(10.0, -30.0, 3.0), path(12.0, 0.0, 2.0), path(40.0, 30.0, 1.0)]);
        let bs = an_beamsteer(&h, 2, DEFAULT_MIN_SEPARATION_DEG).unwrap();
        assert_eq!(bs.selected, vec![0, 2]);
        assert!(!bs.relaxed);
        let aods: Vec<f64> = bs.selected.iter().map(|&i| h.paths[i].aod_rad.to_degrees()).collect();
        assert!((aods[0] - 10.0).abs() < 1e-12 && (aods[1] - 40.0).abs() < 1e-12);
    }

    #[test]
    fn close_arrival_angle_also_skipped() {
        let h = channel(vec![path(10.0, 0.0, 3.0), path(40.0, 2.0, 2.0), path(-40.0, 20.0, 1.0)]);
        let (sel, _) = select_paths(&h, 2, 5.0).unwrap();
        assert_eq!(sel, vec![0, 2]);
    }

    #[test]
    fn relaxation_fills_with_strongest_unused() {
        let h = channel(vec![path(10.0, 0.0, 3.0), path(11.0, 1.0, 2.0), path(12.0, 2.0, 1.0)]);
        let (sel, relaxed) = select_paths(&h, 2, 5.0).unwrap();
        assert!(relaxed);
        assert_eq!(sel, vec![0, 1]);
    }

    #[test]
    fn columns_are_steering_vectors() {
        let h = channel(vec![path(-5.0, 25.0, 2.0), path(33.0, -12.0, 1.0)]);
        let bs = an_beamsteer(&h, 2, 5.0).unwrap();
        for (c, &i) in bs.selected.iter().enumerate() {
            let at = ula_response(h.paths[i].aod_rad, 16).unwrap();
            let ar = ula_response(h.paths[i].aoa_rad, 8).unwrap();
            assert_eq!(bs.precoder.column(c).into_owned(), at);
            assert_eq!(bs.postcoder.column(c).into_owned(), ar);
        }
    }

    #[test]
    fn scaling_channel_keeps_selection() {
        let paths = vec![path(-5.0, 25.0, 2.0), path(-3.0, 60.0, 1.5), path(33.0, -12.0, 1.0)];
        let h = channel(paths.clone());
        let scaled: Vec<_> = paths
            .into_iter()
            .map(|mut p| {
                p.path_loss_linear *= 7.5;
                p
            })
            .collect();
        let h2 = channel(scaled);
        assert_eq!(
            an_beamsteer(&h, 2, 5.0).unwrap().selected,
            an_beamsteer(&h2, 2, 5.0).unwrap().selected
        );
    }

    #[test]
    fn too_many_beams_rejected() {
        let h = channel(vec![path(0.0, 0.0, 1.0)]);
        assert!(an_beamsteer(&h, 2, 5.0).is_err());
    }
}
