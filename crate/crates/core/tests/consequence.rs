use std::sync::Arc;

use harmonic_core::sim::{ScenarioFixture, World};
use harmonic_core::tactical::{go_to_object_trial, GoTo};

fn world_with_speed(speed: f64) -> World {
    let mut f = (*ScenarioFixture::canonical()).clone();
    f.kinematics.speed = speed;
    World::spawn(Arc::new(f), 0)
}

#[test]
fn waypoint_with_late_stop_overshoots_and_search_does_not() {
    for speed in [0.5, 1.0] {
        for latency in [1, 2, 3] {
            let mut w = world_with_speed(speed);
            let grasp = w.kin().grasp_radius;
            let wp = go_to_object_trial(&mut w, GoTo::WaypointThenStop, latency);
            println!(
                "v={speed} L={latency} waypoint past={:.3} dist={:.3} pickup={}",
                wp.past, wp.distance, wp.pickup_ok
            );
            assert!(wp.past >= speed * latency as f64 - 1e-9);
            assert!(wp.distance > grasp);
            assert!(!wp.pickup_ok);

            let mut w = world_with_speed(speed);
            let s = go_to_object_trial(&mut w, GoTo::Search, latency);
            println!(
                "v={speed} L={latency} search dist={:.3} pickup={}",
                s.distance, s.pickup_ok
            );
            assert!(s.distance <= grasp);
            assert!(s.pickup_ok);
        }
    }
}
