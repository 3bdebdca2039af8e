// SPDX-License-Identifier: Apache-2.0

//! JSON-lines event trace. Every record starts with `kind` and `tick`; the
//! remaining fields keep a fixed order per kind.

use serde::Serialize;

use crate::cpu::hart::{Halt, TrapInfo};
use crate::ident::Identifier;
use crate::interconnect::{BusOp, BusStatus};
use crate::secmon::{SmCommand, SmEvent, SmResult};
use crate::soc::machine::Outcome;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TraceEvent {
    Bus {
        tick: u64,
        id: Identifier,
        op: BusOp,
        addr: String,
        data: String,
        status: BusStatus,
    },
    SmCommand {
        tick: u64,
        issuer: Identifier,
        command: SmCommand,
        result: SmResult,
        value: u32,
    },
    SmEvent {
        tick: u64,
        event: SmEvent,
    },
    Trap {
        tick: u64,
        core: u8,
        #[serde(skip_serializing_if = "Option::is_none")]
        slot: Option<u8>,
        cause: String,
        epc: String,
        tval: String,
        handler: String,
    },
    Halt {
        tick: u64,
        core: u8,
        #[serde(skip_serializing_if = "Option::is_none")]
        slot: Option<u8>,
        pc: String,
        a0: String,
        #[serde(flatten)]
        halt: Halt,
    },
    Uart {
        tick: u64,
        text: String,
    },
    Sched {
        tick: u64,
        from: u8,
        to: u8,
        forced: bool,
    },
    Reset {
        tick: u64,
        core: u8,
        asserted: bool,
    },
    Outcome {
        tick: u64,
        #[serde(flatten)]
        outcome: Outcome,
    },
}

pub fn hex(v: u32) -> String {
    format!("{v:#010x}")
}

impl TraceEvent {
    pub fn trap(tick: u64, core: u8, slot: Option<u8>, t: &TrapInfo) -> Self {
        TraceEvent::Trap {
            tick,
            core,
            slot,
            cause: hex(t.cause),
            epc: hex(t.epc),
            tval: hex(t.tval),
            handler: hex(t.handler),
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            TraceEvent::Bus { .. } => "bus",
            TraceEvent::SmCommand { .. } => "sm-command",
            TraceEvent::SmEvent { .. } => "sm-event",
            TraceEvent::Trap { .. } => "trap",
            TraceEvent::Halt { .. } => "halt",
            TraceEvent::Uart { .. } => "uart",
            TraceEvent::Sched { .. } => "sched",
            TraceEvent::Reset { .. } => "reset",
            TraceEvent::Outcome { .. } => "outcome",
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct Trace {
    enabled: bool,
    /// Bus records are the bulk of a trace and can be left out separately.
    bus: bool,
    events: Vec<TraceEvent>,
}

impl Trace {
    pub fn new(enabled: bool, bus: bool) -> Self {
        Self {
            enabled,
            bus,
            events: Vec::new(),
        }
    }

    pub fn enabled(&self) -> bool {
        self.enabled
    }

    pub fn wants_bus(&self) -> bool {
        self.enabled && self.bus
    }

    pub fn push(&mut self, e: TraceEvent) {
        if self.enabled {
            self.events.push(e);
        }
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("trace event serializes"));
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn field_order_is_fixed() {
        let mut t = Trace::new(true, true);
        t.push(TraceEvent::Uart {
            tick: 3,
            text: "hi".into(),
        });
        t.push(TraceEvent::Halt {
            tick: 4,
            core: 1,
            slot: Some(0),
            pc: hex(8),
            a0: hex(0xB0),
            halt: Halt::Ebreak,
        });
        assert_eq!(
            t.to_jsonl(),
            "{\"kind\":\"uart\",\"tick\":3,\"text\":\"hi\"}\n\
             {\"kind\":\"halt\",\"tick\":4,\"core\":1,\"slot\":0,\"pc\":\"0x00000008\",\"a0\":\"0x000000b0\",\"halt\":\"ebreak\"}\n"
        );
    }

    #[test]
    fn disabled_trace_records_nothing() {
        let mut t = Trace::new(false, true);
        t.push(TraceEvent::Uart {
            tick: 0,
            text: String::new(),
        });
        assert!(t.events().is_empty());
        assert!(!t.wants_bus());
    }
}
