mod common;

use common::*;
use qrlob::calibration::Variant;
use qrlob::engine::{self, SimConfig};
use qrlob::flow::{parse_stream, reconstruct_flow, ParseOptions, ReconstructOptions};
use qrlob::model::{LevelSizes, ModelVariant};
use qrlob::FlowItem;

fn sized_model(theta: f64) -> qrlob::model::Model {
    let sizes = LevelSizes {
        limit: Some(dist(&[1, 2, 4], &[3.0, 2.0, 1.0])),
        cancel: Some(dist(&[1, 3], &[2.0, 1.0])),
        market: Some(dist(&[1, 2, 6], &[3.0, 2.0, 1.0])),
        ..Default::default()
    };
    let queue = dist(&[2, 4, 8], &[1.0, 1.0, 1.0]);
    model(
        ModelVariant::Qr,
        theta,
        vec![
            level(1, 2.0, vec![table(1, Variant::Qr, 2.0, plain_keys(), reactive_rates(1.0, 0.15, 0.1, 20))], sizes.clone(), queue.clone()),
            level(2, 2.0, vec![table(2, Variant::Qr, 2.0, plain_keys(), reactive_rates(0.8, 0.1, 0.0, 20))], sizes, queue),
        ],
    )
}

fn reconstruct(log: &qrlob::EventLog) -> qrlob::flow::Reconstruction {
    let csv = raw_csv(log);
    let updates = parse_stream(
        csv.as_bytes(),
        &ParseOptions {
            tick_size: TICK,
            regression_tolerance_ns: 0,
        },
    )
    .unwrap();
    reconstruct_flow(&updates, &ReconstructOptions { depth: 2, tick_size: TICK }).unwrap()
}

#[test]
fn snapshots_of_a_fixed_reference_flow_give_back_the_flow() {
    let log = engine::run(&sized_model(0.0), &SimConfig::new(ModelVariant::Qr, 1800.0, 21)).unwrap();
    assert!(log.summary.depletions > 0);
    let rec = reconstruct(&log);
    assert_eq!(rec.snapshots, log.records.len() + 1);
    assert_eq!(rec.unmatched_trade_volume, 0);
    assert_eq!(rec.log.initial, log.initial);
    assert_eq!(rec.log.records, log.records);
}

#[test]
fn moves_are_recovered_once_the_vacated_price_refills() {
    let log = engine::run(&sized_model(1.0), &SimConfig::new(ModelVariant::Qr, 1800.0, 22)).unwrap();
    assert!(log.summary.ref_moves > 10);
    let rec = reconstruct(&log);
    rec.log.replay(|_, _, _| {}).unwrap();
    // a snapshot cannot tell a move from an empty best queue, so moves are
    // seen late but never invented
    let moves = rec.log.records.iter().filter(|r| matches!(r.item, FlowItem::Move { .. })).count() as u64;
    assert!(moves > 0 && moves <= log.summary.ref_moves);
    let volume = |l: &qrlob::EventLog| l.orders().map(|e| e.size).sum::<u64>();
    assert!(volume(&rec.log) > 0);
    assert_eq!(
        rec.log.records.last().unwrap().mid_half_ticks,
        log.records.last().unwrap().mid_half_ticks
    );
}
