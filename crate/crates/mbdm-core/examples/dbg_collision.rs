use mbdm_core::constraint::scene::encode_agent;
use mbdm_core::constraint::{fd_grad_check, CollisionField, DistanceField, SceneSpec};
use mbdm_core::rng::stream_rng;
use rand::Rng;

fn main() {
    let spec = SceneSpec::new(3);
    let mut rng = stream_rng(24, 0);
    let mut pts = Vec::new();
    while pts.len() < 1000 {
        let mut x = Vec::with_capacity(21);
        for _ in 0..3 {
            x.extend(encode_agent(
                rng.gen_range(-0.4..0.4),
                rng.gen_range(-0.4..0.4),
                rng.gen_range(0.5..1.2),
                rng.gen_range(0.3..0.8),
                rng.gen_range(-3.2..3.2),
                rng.gen_range(0.0..1.0),
            ));
        }
        pts.push(x);
    }
    let coll = CollisionField::new(spec);
    let r = fd_grad_check(&coll as &dyn DistanceField<f64>, &pts, 0.0, 1e-6);
    println!("max err {} at point {} coord {}", r.max_err, r.worst_point, r.worst_coord);
    let p = &pts[r.worst_point];
    println!("point: {p:?}");
    let mut g = vec![0.0; 21];
    coll.grad(p, 0.0, &mut g);
    let k = r.worst_coord;
    let h = 1e-6;
    for hh in [1e-4, 1e-5, 1e-6, 1e-7] {
        let mut pp = p.clone();
        pp[k] += hh;
        let up = coll.eval(&pp, 0.0);
        pp[k] -= 2.0 * hh;
        let dn = coll.eval(&pp, 0.0);
        println!("h={hh:.0e}: fd={}  analytic={}", (up - dn) / (2.0 * hh), g[k]);
    }
    let _ = h;
    // eval value and per-pair areas
    println!("l = {}", coll.eval(p, 0.0));
}
