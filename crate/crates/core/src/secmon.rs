// SPDX-License-Identifier: Apache-2.0

//! Hardware security monitor: owner-gated configuration, claim, release,
//! status, timed withdraw and ownership transfer.

use serde::Serialize;

use crate::ident::Identifier;
use crate::interconnect::{ConfigAction, ConfigCommand, ConfigMaster, DeviceId, Interconnect};
use crate::peripherals::Binding;

pub const DEFAULT_TIMEOUT: u64 = 1000;
pub const ALLOWLIST_CAPACITY: usize = 8;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "cmd", rename_all = "snake_case")]
pub enum SmCommand {
    Configure {
        device: DeviceId,
        allowlist: Vec<Identifier>,
    },
    TransferOwnership {
        new_owner: Identifier,
    },
    Claim {
        device: DeviceId,
        bind: Identifier,
    },
    Release {
        device: DeviceId,
    },
    Status {
        device: DeviceId,
    },
    Withdraw {
        device: DeviceId,
    },
}

impl SmCommand {
    pub fn is_privileged(&self) -> bool {
        matches!(
            self,
            SmCommand::Configure { .. } | SmCommand::TransferOwnership { .. }
        )
    }

    pub fn device(&self) -> Option<DeviceId> {
        match self {
            SmCommand::TransferOwnership { .. } => None,
            SmCommand::Configure { device, .. }
            | SmCommand::Claim { device, .. }
            | SmCommand::Release { device }
            | SmCommand::Status { device }
            | SmCommand::Withdraw { device } => Some(*device),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SmResult {
    Ok,
    Denied,
    Busy,
    NoSuchDevice,
    NotOwner,
    NotClaimed,
}

impl SmResult {
    /// Value of the command port's RESULT register.
    pub fn code(self) -> u32 {
        match self {
            SmResult::Ok => 0,
            SmResult::Denied => 1,
            SmResult::Busy => 2,
            SmResult::NoSuchDevice => 3,
            SmResult::NotOwner => 4,
            SmResult::NotClaimed => 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct StatusInfo {
    pub claimed: bool,
    pub permitted: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct SmResponse {
    pub result: SmResult,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub status: Option<StatusInfo>,
}

impl SmResponse {
    fn of(result: SmResult) -> Self {
        Self {
            result,
            status: None,
        }
    }

    /// RESULT register encoding; Status packs claimed in bit 0 and permitted
    /// in bit 1.
    pub fn register_value(&self) -> u32 {
        match self.status {
            Some(s) => s.claimed as u32 | (s.permitted as u32) << 1,
            None => self.result.code(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum SmEvent {
    WithdrawNotify { device: DeviceId, owner: Identifier },
    ForcedRelease { device: DeviceId },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PendingWithdraw {
    pub deadline: u64,
    pub requester: Identifier,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmEntry {
    pub device: DeviceId,
    pub state: Option<Identifier>,
    pub allowlist: Vec<Identifier>,
    pub pending_withdraw: Option<PendingWithdraw>,
    /// Mirror of the wrapper's binding, so the monitor never emits a
    /// configuration command the wrapper would refuse.
    pub binding: Binding,
}

/// Everything a command produced: the reply, the configuration-channel
/// commands to apply, and notifications.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SmOutcome {
    pub response: SmResponse,
    pub config: Vec<ConfigCommand>,
    pub events: Vec<SmEvent>,
}

#[derive(Debug)]
pub struct SecurityMonitor {
    owner: Identifier,
    entries: Vec<SmEntry>,
    timeout: u64,
    now: u64,
    master: ConfigMaster,
}

impl SecurityMonitor {
    /// Builds the monitor's table from the interconnect's wrappers and takes
    /// the interconnect's configuration capability.
    pub fn new(ic: &Interconnect, master: ConfigMaster, owner: Identifier, timeout: u64) -> Self {
        assert!(timeout > 0, "withdraw timeout must be positive");
        let entries = ic
            .wrappers()
            .map(|(device, w)| {
                let binding = w.binding();
                let (state, allowlist) = match binding {
                    Binding::Fixed(id) => (Some(id), vec![id]),
                    Binding::Bound { core, process } => {
                        (None, vec![Identifier::new(core, process, 0)])
                    }
                    Binding::Configurable => (None, Vec::new()),
                };
                SmEntry {
                    device,
                    state,
                    allowlist,
                    pending_withdraw: None,
                    binding,
                }
            })
            .collect();
        Self {
            owner,
            entries,
            timeout,
            now: 0,
            master,
        }
    }

    pub fn owner(&self) -> Identifier {
        self.owner
    }

    pub fn now(&self) -> u64 {
        self.now
    }

    pub fn timeout(&self) -> u64 {
        self.timeout
    }

    pub fn entries(&self) -> &[SmEntry] {
        &self.entries
    }

    pub fn entry(&self, device: DeviceId) -> Option<&SmEntry> {
        self.entries.get(device.0 as usize)
    }

    fn is_owner(&self, issuer: Identifier) -> bool {
        self.owner.same_principal(issuer)
    }

    /// Pure command semantics; the configuration commands are returned, not
    /// applied.
    pub fn handle(&mut self, issuer: Identifier, cmd: &SmCommand) -> SmOutcome {
        let mut out = SmOutcome {
            response: SmResponse::of(SmResult::Ok),
            config: Vec::new(),
            events: Vec::new(),
        };
        let result = self.dispatch(issuer, cmd, &mut out);
        out.response.result = result;
        out
    }

    fn dispatch(&mut self, issuer: Identifier, cmd: &SmCommand, out: &mut SmOutcome) -> SmResult {
        if let SmCommand::TransferOwnership { new_owner } = cmd {
            if !self.is_owner(issuer) {
                return SmResult::Denied;
            }
            self.owner = *new_owner;
            return SmResult::Ok;
        }
        let device = cmd.device().expect("device command");
        let is_owner = self.is_owner(issuer);
        let now = self.now;
        let timeout = self.timeout;
        let Some(e) = self.entries.get_mut(device.0 as usize) else {
            return SmResult::NoSuchDevice;
        };
        match cmd {
            SmCommand::TransferOwnership { .. } => unreachable!(),
            SmCommand::Configure { allowlist, .. } => {
                if !is_owner || allowlist.len() > ALLOWLIST_CAPACITY {
                    return SmResult::Denied;
                }
                e.allowlist = allowlist.clone();
                SmResult::Ok
            }
            SmCommand::Claim { bind, .. } => {
                if e.state.is_some() {
                    return SmResult::Busy;
                }
                let for_self = bind.same_principal(issuer);
                // The owner may assign a device to another principal, which
                // still has to be on the allowlist.
                let permitted = if for_self {
                    e.allowlist.iter().any(|a| a.matches(issuer))
                } else {
                    is_owner && e.allowlist.iter().any(|a| a.matches(*bind))
                };
                if !permitted || !e.binding.admits(*bind) {
                    return SmResult::Denied;
                }
                e.state = Some(*bind);
                out.config.push(ConfigCommand {
                    target: device,
                    action: ConfigAction::SetId(*bind),
                });
                SmResult::Ok
            }
            SmCommand::Release { .. } => {
                let Some(holder) = e.state else {
                    return SmResult::NotClaimed;
                };
                if !holder.same_principal(issuer) {
                    return SmResult::NotOwner;
                }
                if matches!(e.binding, Binding::Fixed(_)) {
                    return SmResult::Denied;
                }
                e.state = None;
                e.pending_withdraw = None;
                out.config.push(ConfigCommand {
                    target: device,
                    action: ConfigAction::ClearId,
                });
                SmResult::Ok
            }
            SmCommand::Status { .. } => {
                out.response.status = Some(StatusInfo {
                    claimed: e.state.is_some(),
                    permitted: e.allowlist.iter().any(|a| a.matches(issuer)),
                });
                SmResult::Ok
            }
            SmCommand::Withdraw { .. } => {
                let Some(holder) = e.state else {
                    return SmResult::NotClaimed;
                };
                if matches!(e.binding, Binding::Fixed(_)) {
                    return SmResult::Denied;
                }
                if !is_owner && !e.allowlist.iter().any(|a| a.matches(issuer)) {
                    return SmResult::Denied;
                }
                if e.pending_withdraw.is_none() {
                    e.pending_withdraw = Some(PendingWithdraw {
                        deadline: now + timeout,
                        requester: issuer,
                    });
                    out.events.push(SmEvent::WithdrawNotify {
                        device,
                        owner: holder,
                    });
                }
                SmResult::Ok
            }
        }
    }

    /// Advances time by one tick and force-releases expired withdraws.
    pub fn tick(&mut self) -> (Vec<ConfigCommand>, Vec<SmEvent>) {
        self.now += 1;
        let mut config = Vec::new();
        let mut events = Vec::new();
        for e in &mut self.entries {
            let expired = e.pending_withdraw.is_some_and(|p| p.deadline == self.now);
            if expired && e.state.is_some() {
                e.state = None;
                e.pending_withdraw = None;
                config.push(ConfigCommand {
                    target: e.device,
                    action: ConfigAction::ClearId,
                });
                events.push(SmEvent::ForcedRelease { device: e.device });
            }
        }
        (config, events)
    }

    /// Runs a command and applies its configuration commands to `ic`.
    pub fn execute(
        &mut self,
        ic: &mut Interconnect,
        issuer: Identifier,
        cmd: &SmCommand,
    ) -> (SmResponse, Vec<SmEvent>) {
        let out = self.handle(issuer, cmd);
        self.apply(ic, &out.config);
        (out.response, out.events)
    }

    /// [`SecurityMonitor::tick`] with the resulting commands applied.
    pub fn tick_apply(&mut self, ic: &mut Interconnect) -> Vec<SmEvent> {
        let (config, events) = self.tick();
        self.apply(ic, &config);
        events
    }

    fn apply(&self, ic: &mut Interconnect, config: &[ConfigCommand]) {
        for c in config {
            let r = ic.config_submit(&self.master, *c);
            debug_assert!(r.is_ok(), "monitor emitted a refused command: {r:?}");
        }
    }

    /// Table/wrapper coherence check used by tests and audits.
    pub fn check_coherence(&self, ic: &Interconnect) -> Result<(), String> {
        for e in &self.entries {
            let field = ic.wrapper(e.device).id_field();
            if field != e.state {
                return Err(format!(
                    "device {:?}: table {:?}, wrapper {:?}",
                    e.device, e.state, field
                ));
            }
            if e.pending_withdraw.is_some() && e.state.is_none() {
                return Err(format!("device {:?}: withdraw pending while unclaimed", e.device));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::peripherals::{Device, Ram, Uart, Wrapper};

    const VC0: Identifier = Identifier::new(1, 1, 0);
    const REE: Identifier = Identifier::new(0, 2, 0);

    fn setup() -> (Interconnect, SecurityMonitor, DeviceId, DeviceId) {
        let (mut ic, master) = Interconnect::new();
        let uart = ic.add_device(
            "uart",
            Wrapper::new(Binding::Configurable, Device::Uart(Uart::default())),
        );
        let ss = ic.add_device(
            "ss0",
            Wrapper::new(Binding::Fixed(VC0), Device::SecureStorage(Ram::new(16))),
        );
        let sm = SecurityMonitor::new(&ic, master, VC0, DEFAULT_TIMEOUT);
        (ic, sm, uart, ss)
    }

    fn run(sm: &mut SecurityMonitor, ic: &mut Interconnect, who: Identifier, cmd: SmCommand) -> SmResult {
        sm.execute(ic, who, &cmd).0.result
    }

    #[test]
    fn configure_then_both_cores_may_claim() {
        let (mut ic, mut sm, uart, _) = setup();
        let cfg = SmCommand::Configure {
            device: uart,
            allowlist: vec![Identifier::new(0, 0, 0), Identifier::new(1, 0, 0)],
        };
        assert_eq!(run(&mut sm, &mut ic, VC0, cfg), SmResult::Ok);
        assert_eq!(
            run(&mut sm, &mut ic, REE, SmCommand::Claim { device: uart, bind: REE }),
            SmResult::Ok
        );
        assert_eq!(ic.wrapper(uart).id_field(), Some(REE));
        assert_eq!(
            run(&mut sm, &mut ic, REE, SmCommand::Release { device: uart }),
            SmResult::Ok
        );
        let tee = Identifier::new(1, 3, 0);
        assert_eq!(
            run(&mut sm, &mut ic, tee, SmCommand::Claim { device: uart, bind: tee }),
            SmResult::Ok
        );
        assert_eq!(
            run(&mut sm, &mut ic, REE, SmCommand::Claim { device: uart, bind: REE }),
            SmResult::Busy
        );
        sm.check_coherence(&ic).unwrap();
    }

    #[test]
    fn not_allowlisted_is_denied_and_no_proxy_claims() {
        let (mut ic, mut sm, uart, _) = setup();
        assert_eq!(
            run(&mut sm, &mut ic, REE, SmCommand::Claim { device: uart, bind: REE }),
            SmResult::Denied
        );
        let cfg = SmCommand::Configure {
            device: uart,
            allowlist: vec![Identifier::new(0, 0, 0)],
        };
        run(&mut sm, &mut ic, VC0, cfg);
        let other = Identifier::new(0, 3, 0);
        assert_eq!(
            run(&mut sm, &mut ic, REE, SmCommand::Claim { device: uart, bind: other }),
            SmResult::Denied
        );
        assert_eq!(ic.wrapper(uart).id_field(), None);
    }

    #[test]
    fn owner_may_assign_to_allowlisted_principal() {
        let (mut ic, mut sm, uart, _) = setup();
        let vc1 = Identifier::new(1, 2, 0);
        run(
            &mut sm,
            &mut ic,
            VC0,
            SmCommand::Configure { device: uart, allowlist: vec![vc1] },
        );
        assert_eq!(
            run(&mut sm, &mut ic, VC0, SmCommand::Claim { device: uart, bind: vc1 }),
            SmResult::Ok
        );
        assert_eq!(ic.wrapper(uart).id_field(), Some(vc1));
        assert_eq!(
            run(&mut sm, &mut ic, VC0, SmCommand::Release { device: uart }),
            SmResult::NotOwner
        );
    }

    #[test]
    fn transfer_ownership_revokes_old_owner() {
        let (mut ic, mut sm, uart, _) = setup();
        let new_owner = Identifier::new(0, 1, 0);
        assert_eq!(
            run(&mut sm, &mut ic, VC0, SmCommand::TransferOwnership { new_owner }),
            SmResult::Ok
        );
        assert_eq!(sm.owner(), new_owner);
        let cfg = SmCommand::Configure { device: uart, allowlist: vec![] };
        assert_eq!(run(&mut sm, &mut ic, VC0, cfg.clone()), SmResult::Denied);
        assert_eq!(run(&mut sm, &mut ic, new_owner.with_peripheral(9), cfg), SmResult::Ok);
    }

    #[test]
    fn fixed_devices_cannot_be_released_or_withdrawn() {
        let (mut ic, mut sm, _, ss) = setup();
        assert_eq!(run(&mut sm, &mut ic, VC0, SmCommand::Release { device: ss }), SmResult::Denied);
        assert_eq!(run(&mut sm, &mut ic, VC0, SmCommand::Withdraw { device: ss }), SmResult::Denied);
        assert_eq!(
            run(&mut sm, &mut ic, VC0, SmCommand::Claim { device: ss, bind: VC0 }),
            SmResult::Busy
        );
        assert_eq!(ic.wrapper(ss).id_field(), Some(VC0));
        assert_eq!(
            run(&mut sm, &mut ic, VC0, SmCommand::Status { device: DeviceId(7) }),
            SmResult::NoSuchDevice
        );
    }

    #[test]
    fn status_reports_without_mutation() {
        let (mut ic, mut sm, uart, _) = setup();
        let (rsp, ev) = sm.execute(&mut ic, REE, &SmCommand::Status { device: uart });
        assert!(ev.is_empty());
        assert_eq!(rsp.status, Some(StatusInfo { claimed: false, permitted: false }));
        assert_eq!(rsp.register_value(), 0);
    }

    fn claimed_by_tee(timeout: u64) -> (Interconnect, SecurityMonitor, DeviceId) {
        let (mut ic, master) = Interconnect::new();
        let uart = ic.add_device(
            "uart",
            Wrapper::new(Binding::Configurable, Device::Uart(Uart::default())),
        );
        let mut sm = SecurityMonitor::new(&ic, master, REE, timeout);
        let tee = Identifier::new(1, 2, 0);
        sm.execute(
            &mut ic,
            REE,
            &SmCommand::Configure { device: uart, allowlist: vec![Identifier::new(1, 0, 0)] },
        );
        sm.execute(&mut ic, tee, &SmCommand::Claim { device: uart, bind: tee });
        (ic, sm, uart)
    }

    #[test]
    fn forced_release_exactly_at_deadline() {
        let (mut ic, mut sm, uart) = claimed_by_tee(1000);
        for _ in 0..10 {
            sm.tick_apply(&mut ic);
        }
        let (rsp, ev) = sm.execute(&mut ic, REE, &SmCommand::Withdraw { device: uart });
        assert_eq!(rsp.result, SmResult::Ok);
        assert_eq!(
            ev,
            vec![SmEvent::WithdrawNotify { device: uart, owner: Identifier::new(1, 2, 0) }]
        );
        // a second withdraw while pending changes nothing
        let (_, ev) = sm.execute(&mut ic, REE, &SmCommand::Withdraw { device: uart });
        assert!(ev.is_empty());
        while sm.now() < 1009 {
            assert!(sm.tick_apply(&mut ic).is_empty());
        }
        assert_eq!(sm.tick_apply(&mut ic), vec![SmEvent::ForcedRelease { device: uart }]);
        assert_eq!(sm.now(), 1010);
        assert_eq!(ic.wrapper(uart).id_field(), None);
        sm.check_coherence(&ic).unwrap();
    }

    #[test]
    fn graceful_release_cancels_timer() {
        let (mut ic, mut sm, uart) = claimed_by_tee(1000);
        sm.execute(&mut ic, REE, &SmCommand::Withdraw { device: uart });
        for _ in 0..500 {
            sm.tick_apply(&mut ic);
        }
        let tee = Identifier::new(1, 2, 0x155);
        assert_eq!(
            sm.execute(&mut ic, tee, &SmCommand::Release { device: uart }).0.result,
            SmResult::Ok
        );
        for _ in 0..2000 {
            assert!(sm.tick_apply(&mut ic).is_empty());
        }
    }

    #[test]
    fn withdraw_needs_owner_or_allowlist() {
        let (mut ic, mut sm, uart) = claimed_by_tee(10);
        let stranger = Identifier::new(0, 5, 0);
        assert_eq!(
            sm.execute(&mut ic, stranger, &SmCommand::Withdraw { device: uart }).0.result,
            SmResult::Denied
        );
        let (mut ic2, master) = Interconnect::new();
        let u2 = ic2.add_device(
            "uart",
            Wrapper::new(Binding::Configurable, Device::Uart(Uart::default())),
        );
        let mut sm2 = SecurityMonitor::new(&ic2, master, REE, 10);
        assert_eq!(
            sm2.execute(&mut ic2, REE, &SmCommand::Withdraw { device: u2 }).0.result,
            SmResult::NotClaimed
        );
    }
}
