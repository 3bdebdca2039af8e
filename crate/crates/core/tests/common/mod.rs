// SPDX-License-Identifier: Apache-2.0

#![allow(dead_code)]

use std::path::PathBuf;

use hectorv::interconnect::{BusStatus, DeviceId, Target};
use hectorv::layout::dev;
use hectorv::peripherals::{Binding, Device, SdCard};
use hectorv::secmon::{SmCommand, SmEvent, SmResult};
use hectorv::soc::machine::default_interconnect;
use hectorv::soc::{Machine, Outcome, SocConfig, Trace, TraceEvent};

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

pub fn config(rel: &str) -> (SocConfig, PathBuf) {
    let path = fixtures().join(rel);
    let text = std::fs::read_to_string(&path).unwrap();
    (SocConfig::from_json(&text).unwrap(), path.parent().unwrap().to_path_buf())
}

pub fn machine(rel: &str, trace: bool) -> Machine {
    let (c, base) = config(rel);
    Machine::from_config(&c, &base, Trace::new(trace, true)).unwrap()
}

pub fn run(rel: &str, trace: bool) -> (Machine, Outcome) {
    let mut m = machine(rel, trace);
    let max = m.config().max_ticks;
    let out = m.run(max);
    (m, out)
}

pub fn set_sd_image(m: &mut Machine, bytes: Vec<u8>) {
    *m.ic.wrapper_mut(DeviceId(dev::SD)).device_mut() = Device::SdCard(SdCard::new(bytes));
}

/// Replays wrapper identifiers from the trace's monitor records and checks
/// that every successful device access matched the identifier in force at
/// that moment. Returns the number of accesses checked.
pub fn audit(events: &[TraceEvent], initial_owner: hectorv::ident::Identifier) -> Result<usize, String> {
    let (ic, _) = default_interconnect(Vec::new(), [false, false], None);
    let mut ids: Vec<_> = ic
        .device_ids()
        .map(|d| match ic.wrapper(d).binding() {
            Binding::Fixed(id) => Some(id),
            _ => None,
        })
        .collect();
    let mut owner = initial_owner;
    let mut checked = 0;
    for e in events {
        match e {
            TraceEvent::SmCommand {
                command, result, issuer, ..
            } if *result == SmResult::Ok => match command {
                SmCommand::Claim { device, bind } => ids[device.0 as usize] = Some(*bind),
                SmCommand::Release { device } => ids[device.0 as usize] = None,
                SmCommand::TransferOwnership { new_owner } => {
                    if !owner.same_principal(*issuer) {
                        return Err(format!("{issuer} transferred ownership without holding it"));
                    }
                    owner = *new_owner;
                }
                _ => {}
            },
            TraceEvent::SmEvent {
                event: SmEvent::ForcedRelease { device },
                ..
            } => ids[device.0 as usize] = None,
            TraceEvent::Bus {
                tick, id, addr, status, ..
            } if *status == BusStatus::Okay => {
                let a = u32::from_str_radix(addr.trim_start_matches("0x"), 16).unwrap();
                if let Some((entry, _)) = ic.route(a) {
                    if let Target::Device(d) = entry.target {
                        let stored = ids[d.0 as usize];
                        if !stored.is_some_and(|s| s.matches(*id)) {
                            return Err(format!(
                                "tick {tick}: {id} accessed {addr} ({}) while its wrapper held {stored:?}",
                                ic.name(d)
                            ));
                        }
                        checked += 1;
                    }
                }
            }
            TraceEvent::Outcome { outcome, .. }
                if outcome.owner != owner => {
                    return Err(format!("final owner {} but replay gives {owner}", outcome.owner));
                }
            _ => {}
        }
    }
    Ok(checked)
}
