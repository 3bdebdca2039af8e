// SPDX-License-Identifier: Apache-2.0

//! Monitor invariants over random command sequences.

use proptest::prelude::*;

use hectorv::ident::Identifier;
use hectorv::interconnect::{DeviceId, Interconnect, Target};
use hectorv::peripherals::{Binding, Device, Ram, Wrapper};
use hectorv::secmon::{SecurityMonitor, SmCommand, SmEvent, SmResult};

const FIXED: Identifier = Identifier::new(1, 1, 0);

fn setup(owner: Identifier, timeout: u64) -> (Interconnect, SecurityMonitor) {
    let (mut ic, master) = Interconnect::new();
    let bindings = [
        Binding::Fixed(FIXED),
        Binding::Bound { core: 1, process: 2 },
        Binding::Configurable,
        Binding::Configurable,
    ];
    for (i, b) in bindings.into_iter().enumerate() {
        let d = ic.add_device(format!("d{i}"), Wrapper::new(b, Device::Bram(Ram::new(16))));
        ic.attach(0x1000 * i as u32, 16, Target::Device(d)).unwrap();
    }
    let sm = SecurityMonitor::new(&ic, master, owner, timeout);
    (ic, sm)
}

/// Every identifier at reduced widths: 2 cores x 4 processes x 4 peripherals.
fn any_id() -> impl Strategy<Value = Identifier> {
    (0u8..2, 0u8..4, 0u16..4).prop_map(|(c, p, q)| Identifier::new(c, p, q))
}

fn command() -> impl Strategy<Value = SmCommand> {
    let dev = (0u16..4).prop_map(DeviceId);
    prop_oneof![
        (dev.clone(), prop::collection::vec(any_id(), 0..4))
            .prop_map(|(device, allowlist)| SmCommand::Configure { device, allowlist }),
        any_id().prop_map(|new_owner| SmCommand::TransferOwnership { new_owner }),
        (dev.clone(), any_id()).prop_map(|(device, bind)| SmCommand::Claim { device, bind }),
        dev.clone().prop_map(|device| SmCommand::Release { device }),
        dev.clone().prop_map(|device| SmCommand::Status { device }),
        dev.prop_map(|device| SmCommand::Withdraw { device }),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(2000))]

    #[test]
    fn monitor_invariants(
        owner in any_id(),
        steps in prop::collection::vec((any_id(), command(), 0u64..4), 1..48),
    ) {
        let (mut ic, mut sm) = setup(owner, 5);
        // Devices with a notified, still unreleased withdraw.
        let mut notified = [false; 4];
        for (issuer, cmd, idle) in steps {
            for _ in 0..idle {
                for e in sm.tick_apply(&mut ic) {
                    if let SmEvent::ForcedRelease { device } = e {
                        prop_assert!(notified[device.0 as usize], "forced release without notice");
                        notified[device.0 as usize] = false;
                        prop_assert_eq!(ic.wrapper(device).id_field(), None);
                    }
                }
            }
            let owner_before = sm.owner();
            let table_before: Vec<_> = sm.entries().iter().map(|e| (e.state, e.allowlist.clone())).collect();
            let (rsp, events) = sm.execute(&mut ic, issuer, &cmd);
            for e in &events {
                match e {
                    SmEvent::WithdrawNotify { device, .. } => notified[device.0 as usize] = true,
                    SmEvent::ForcedRelease { .. } => prop_assert!(false, "forced release outside a tick"),
                }
            }
            if let SmCommand::Release { device } = cmd {
                if rsp.result == SmResult::Ok {
                    notified[device.0 as usize] = false;
                }
            }
            // Privilege soundness.
            if cmd.is_privileged() && !owner_before.same_principal(issuer) {
                prop_assert_ne!(rsp.result, SmResult::Ok);
                prop_assert_eq!(sm.owner(), owner_before);
                let table_after: Vec<_> = sm.entries().iter().map(|e| (e.state, e.allowlist.clone())).collect();
                prop_assert_eq!(table_after, table_before);
            }
            // The fixed wrapper never changes.
            prop_assert_eq!(ic.wrapper(DeviceId(0)).id_field(), Some(FIXED));
            prop_assert!(sm.check_coherence(&ic).is_ok());
        }
    }
}
