//! NDJSON records for the event stream: emission events plus control
//! records (turn headers and terminators).

use serde::{Deserialize, Serialize};

use crate::memory::TurnLabel;
use crate::scheduler::EmissionEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TurnOrigin {
    User,
    Proactive,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ControlRecord {
    /// Opens a turn; `at_ms` is session time, event offsets are relative to it.
    Turn {
        at_ms: u64,
        origin: TurnOrigin,
    },
    Done {
        strategy: Option<TurnLabel>,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        degraded: bool,
    },
    Error {
        code: String,
        message: String,
    },
    Cancelled,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum WireRecord {
    Event(EmissionEvent),
    Control(ControlRecord),
}

impl WireRecord {
    pub fn to_line(&self) -> String {
        let mut s = serde_json::to_string(self).expect("record serializes");
        s.push('\n');
        s
    }

    pub fn is_terminal(&self) -> bool {
        matches!(
            self,
            WireRecord::Control(ControlRecord::Done { .. } | ControlRecord::Error { .. } | ControlRecord::Cancelled)
        )
    }
}

impl From<EmissionEvent> for WireRecord {
    fn from(e: EmissionEvent) -> Self {
        WireRecord::Event(e)
    }
}

impl From<ControlRecord> for WireRecord {
    fn from(c: ControlRecord) -> Self {
        WireRecord::Control(c)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::strategy::Strategy;

    #[test]
    fn terminator_layout() {
        let done = WireRecord::from(ControlRecord::Done {
            strategy: Some(TurnLabel::Strategy(Strategy::Resolve)),
            degraded: false,
        });
        assert_eq!(done.to_line(), "{\"type\":\"done\",\"strategy\":\"RESOLVE\"}\n");
        let stat = WireRecord::from(ControlRecord::Done { strategy: None, degraded: false });
        assert_eq!(stat.to_line(), "{\"type\":\"done\",\"strategy\":null}\n");
        assert_eq!(WireRecord::from(ControlRecord::Cancelled).to_line(), "{\"type\":\"cancelled\"}\n");
    }

    #[test]
    fn lines_parse_back() {
        for line in [
            r#"{"kind":"CHUNK","at_ms":5600,"text":"I hear you feel stuck,"}"#,
            r#"{"type":"done","strategy":"PROACTIVE"}"#,
            r#"{"type":"turn","at_ms":60000,"origin":"proactive"}"#,
            r#"{"type":"error","code":"BUSY","message":"turn in flight"}"#,
        ] {
            let rec: WireRecord = serde_json::from_str(line).unwrap();
            assert_eq!(rec.to_line().trim_end(), line);
        }
    }
}
