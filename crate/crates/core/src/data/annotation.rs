//! Per-video accident annotation and its JSON form.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const NUM_CATEGORIES: u32 = 54;
pub const FPS: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BehaviorType {
    Crossing,
    Hitting,
    OutOfControl,
    Other,
}

impl BehaviorType {
    pub fn as_str(self) -> &'static str {
        match self {
            BehaviorType::Crossing => "crossing",
            BehaviorType::Hitting => "hitting",
            BehaviorType::OutOfControl => "out_of_control",
            BehaviorType::Other => "other",
        }
    }
}

impl std::str::FromStr for BehaviorType {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_string()))
            .map_err(|_| Error::invalid("behavior_type", format!("unknown behavior type {s:?}")))
    }
}

/// Axis-aligned box on one frame; covers columns `x..x+w` and rows `y..y+h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrashBox {
    pub frame: usize,
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CrashBox {
    /// True for the `w` x `h` pixels the box covers, edge pixels included.
    pub fn contains(&self, px: usize, py: usize) -> bool {
        px >= self.x && px < self.x + self.w && py >= self.y && py < self.y + self.h
    }
}

/// Field order is the canonical serialization order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccidentAnnotation {
    pub video_id: String,
    pub category_id: u32,
    pub ego_involved: bool,
    pub num_frames: usize,
    pub fps: u32,
    pub aw_start: usize,
    pub aw_end: usize,
    pub behavior_type: BehaviorType,
    pub crash_boxes: Vec<CrashBox>,
}

/// Frame counts of the three phases of a video.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PhaseLengths {
    pub before: usize,
    pub window: usize,
    pub after: usize,
}

impl AccidentAnnotation {
    /// Every violated invariant, empty when valid.
    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.video_id.is_empty() {
            v.push("video_id: must not be empty".to_string());
        }
        if !(1..=NUM_CATEGORIES).contains(&self.category_id) {
            v.push(format!("category_id: {} outside 1..={NUM_CATEGORIES}", self.category_id));
        }
        if self.num_frames == 0 {
            v.push("num_frames: must be positive".to_string());
        }
        if self.fps != FPS {
            v.push(format!("fps: {} but annotations are recorded at {FPS}", self.fps));
        }
        if self.aw_start > self.aw_end {
            v.push(format!("aw_start: {} after aw_end {}", self.aw_start, self.aw_end));
        }
        if self.aw_end >= self.num_frames {
            v.push(format!("aw_end: {} not below num_frames {}", self.aw_end, self.num_frames));
        }
        for (i, b) in self.crash_boxes.iter().enumerate() {
            if b.frame >= self.num_frames {
                v.push(format!("crash_boxes[{i}].frame: {} not below num_frames {}", b.frame, self.num_frames));
            }
            if b.w == 0 || b.h == 0 {
                v.push(format!("crash_boxes[{i}]: empty box"));
            }
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let violations = self.violations();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Annotation { violations })
        }
    }

    /// Checks that every box lies inside a `width` x `height` frame.
    pub fn validate_boxes_within(&self, width: usize, height: usize) -> Result<()> {
        let violations: Vec<String> = self
            .crash_boxes
            .iter()
            .enumerate()
            .filter(|(_, b)| b.x + b.w > width || b.y + b.h > height)
            .map(|(i, b)| {
                format!("crash_boxes[{i}]: box ({}, {}, {}, {}) exceeds {width}x{height} frame", b.x, b.y, b.w, b.h)
            })
            .collect();
        if violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Annotation { violations })
        }
    }

    pub fn phases(&self) -> PhaseLengths {
        PhaseLengths {
            before: self.aw_start,
            window: self.aw_end - self.aw_start + 1,
            after: self.num_frames - self.aw_end - 1,
        }
    }

    pub fn boxes_on(&self, frame: usize) -> impl Iterator<Item = &CrashBox> {
        self.crash_boxes.iter().filter(move |b| b.frame == frame)
    }

    /// Compact JSON in canonical field order.
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("plain data serializes")
    }
}

/// Parses and validates one annotation.
pub fn parse_annotation(bytes: &[u8]) -> Result<AccidentAnnotation> {
    let ann: AccidentAnnotation = serde_json::from_slice(bytes)?;
    ann.validate()?;
    Ok(ann)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"video_id":"v1","category_id":3,"ego_involved":true,"num_frames":40,"fps":30,"aw_start":10,"aw_end":19,"behavior_type":"crossing","crash_boxes":[{"frame":12,"x":1,"y":2,"w":3,"h":4}]}"#;

    #[test]
    fn canonical_round_trip() {
        let a = parse_annotation(MINIMAL.as_bytes()).unwrap();
        assert_eq!(a.to_json(), MINIMAL);
        assert_eq!(a.phases(), PhaseLengths { before: 10, window: 10, after: 20 });
    }

    #[test]
    fn violations_are_named() {
        let bad = MINIMAL.replace("\"aw_end\":19", "\"aw_end\":40").replace("\"category_id\":3", "\"category_id\":55");
        match parse_annotation(bad.as_bytes()) {
            Err(Error::Annotation { violations }) => {
                assert_eq!(violations.len(), 2);
                assert!(violations.iter().any(|v| v.starts_with("aw_end")));
                assert!(violations.iter().any(|v| v.starts_with("category_id")));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn malformed_and_unknown_fields() {
        assert!(matches!(parse_annotation(b"{"), Err(Error::Json(_))));
        let extra = MINIMAL.replace("\"fps\":30", "\"fps\":30,\"extra\":1");
        assert!(parse_annotation(extra.as_bytes()).is_err());
        let neg = MINIMAL.replace("\"aw_start\":10", "\"aw_start\":-1");
        assert!(parse_annotation(neg.as_bytes()).is_err());
    }

    #[test]
    fn box_bounds() {
        let a = parse_annotation(MINIMAL.as_bytes()).unwrap();
        assert!(a.validate_boxes_within(4, 6).is_ok());
        assert!(a.validate_boxes_within(3, 6).is_err());
        assert!("out_of_control".parse::<BehaviorType>().is_ok());
        assert!("flying".parse::<BehaviorType>().is_err());
    }
}
