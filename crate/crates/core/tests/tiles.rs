use dirsq::carleson::verify_carleson;
use dirsq::geometry::{DyadicInterval, Parallelogram, ParallelogramCollection, Slope};
use dirsq::spectral::{Grid, GridFunction};
use dirsq::tiles::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn grid() -> Grid {
    Grid::new(256, 16.0).unwrap()
}

fn ancestor(p: &Parallelogram, levels: i32) -> Parallelogram {
    let up = |mut d: DyadicInterval| {
        for _ in 0..levels {
            d = d.parent();
        }
        d
    };
    Parallelogram::new(p.slope, up(p.base), up(p.vert)).unwrap()
}

fn indicator(c: &ParallelogramCollection, g: Grid) -> GridFunction {
    let members = c.to_vec();
    GridFunction::from_real(g, |x, y| if members.iter().any(|p| p.contains_f64(x, y)) { 1.0 } else { 0.0 })
}

#[test]
fn bounded_inputs_give_carleson_sequences() {
    let g = grid();
    let ts = smooth_cone_tiles(&cone_arcs(4).unwrap(), g).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let f = GridFunction::from_fn(g, |x, y| {
        let r = x.hypot(y);
        if r < 3.0 {
            num_complex::Complex64::from_polar(1.0, 2.7 * x - 1.3 * y * y)
        } else {
            num_complex::Complex64::new(0.0, 0.0)
        }
    });
    let a = coefficients(&f, &ts, &PacketParams::default()).unwrap();
    let seq = carleson_sequence(&ts, &a);
    let all = ts.spatial_collection();
    let mut covers: Vec<(Slope, ParallelogramCollection)> = Vec::new();
    for _ in 0..40 {
        let s = ts.tiles[rng.gen_range(0..ts.len())].slope();
        let same: Vec<&Tile> = ts.tiles.iter().filter(|t| t.slope() == s && t.spatial.center().0.abs() < 4.0).collect();
        let mut cover = ParallelogramCollection::new();
        for _ in 0..rng.gen_range(1..4) {
            let t = same[rng.gen_range(0..same.len())];
            cover.push(ancestor(&t.spatial, rng.gen_range(0..3)));
        }
        covers.push((s, cover));
    }
    let report = verify_carleson(&all, &seq, &covers).unwrap();
    assert!(report.worst <= 16.0, "{}", report.worst);
}

#[test]
fn local_orthogonality_on_own_shadow() {
    let g = grid();
    let ts = smooth_cone_tiles(&cone_arcs(4).unwrap(), g).unwrap();
    let s = ts.tiles[0].slope();
    let pick: Vec<Tile> = ts.tiles.iter().filter(|t| t.slope() == s && t.spatial.center().0.abs() < 2.0 && t.spatial.center().1.abs() < 2.0).copied().collect();
    assert!(!pick.is_empty());
    let sub = TileSet { tiles: pick, ..ts.clone() };
    let cover = sub.spatial_collection();
    let f = indicator(&cover, g);
    let r = local_orthogonality_check(&sub, &cover, &f, &PacketParams::default()).unwrap();
    assert!(r > 0.0 && r <= 16.0, "{r}");

    let far = GridFunction::from_real(g, |x, _| if x > 5.0 && x < 7.0 { 1.0 } else { 0.0 });
    let small = local_orthogonality_check(&sub, &cover, &far, &PacketParams::default()).unwrap();
    assert!(small < 0.05 * r, "{small} vs {r}");

    let empty = TileSet { tiles: vec![], ..ts.clone() };
    assert_eq!(local_orthogonality_check(&empty, &cover, &f, &PacketParams::default()).unwrap(), 0.0);

    let other: Vec<Tile> = ts.tiles.iter().filter(|t| t.slope() == s && t.spatial.center().0 > 6.0).take(1).copied().collect();
    let bad = TileSet { tiles: other, ..ts };
    assert!(local_orthogonality_check(&bad, &cover, &f, &PacketParams::default()).is_err());
}
