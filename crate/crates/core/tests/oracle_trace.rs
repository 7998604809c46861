mod common;

use common::oracle;
use psisim::instruments::{write_events_csv, AgentId, ClassGroup, GoodId};

#[test]
fn stepper_matches_the_hand_trace() {
    let (_, events) = oracle::run();
    let want = oracle::expected();
    for (k, (got, want)) in events.iter().zip(&want).enumerate() {
        assert_eq!(got, want, "row {k}");
    }
    assert_eq!(events.len(), want.len(), "{events:#?}");
}

#[test]
fn trace_as_csv() {
    let (_, events) = oracle::run();
    let mut out = Vec::new();
    write_events_csv(&mut out, &events).unwrap();
    let text = String::from_utf8(out).unwrap();
    let expected = "\
tick,event-kind,class-id,from,to,amount
0,issue,0,,1,60
0,issue,1,,0,60
0,transfer,1,0,1,60
0,redeem,0,1,0,60
1,transfer,1,1,2,30
2,transfer,1,2,1,23
2,transfer,1,1,2,10
";
    assert_eq!(text, expected);
}

#[test]
fn end_state_follows_from_the_trace() {
    let (world, _) = oracle::run();
    for (a, &want) in oracle::FINAL_PSI.iter().enumerate() {
        assert_eq!(world.ledger().group_balance(AgentId(a as u32), ClassGroup::Psi), want, "agent {a}");
    }
    assert_eq!(world.ledger().group_outstanding(ClassGroup::Psi), 60);
    assert_eq!(world.ledger().group_outstanding(ClassGroup::Iou), 0);
    // Second update, after tick 2: stone 10 vs 8, cloth 6 vs 8, bread 0 vs
    // 0.5, so factors 0.875, 1.125 and 1.5 on 9.375, 22.5 and 5.
    assert_eq!(world.prices(), &[8.203125, 25.3125, 7.5]);

    let (stone, cloth, bread) = (GoodId(0), GoodId(1), GoodId(2));
    let inv = |a: usize, g| world.agents()[a].inventory.qty(g);
    // Provider: 8 + 2 produced stone; cloth 2 endowed, 3 bought and used.
    assert_eq!((inv(0, stone), inv(0, cloth), inv(0, bread)), (10, 2, 0));
    // Cloth maker: 8 − 3 + 2 produced − 1 sold; the 2 bread bought at
    // tick 2 are eaten the same tick.
    assert_eq!((inv(1, stone), inv(1, cloth), inv(1, bread)), (2, 6, 0));
    // Baker: stone and cloth endowment plus the cloth it bought; bread
    // 2 made at ticks 1 and 2, both sold at tick 2.
    assert_eq!((inv(2, stone), inv(2, cloth), inv(2, bread)), (2, 3, 0));
}
