use serde::{Deserialize, Serialize};

pub const REFERENCE_PREFIX: &str = "A whole photo of ";
pub const REFERENCE_SUFFIX: &str = " in the white background taken with 50mm lens";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ViewDirection {
    Front,
    Side,
    Back,
    Overhead,
}

impl ViewDirection {
    pub fn as_str(&self) -> &'static str {
        match self {
            ViewDirection::Front => "front",
            ViewDirection::Side => "side",
            ViewDirection::Back => "back",
            ViewDirection::Overhead => "overhead",
        }
    }
}

/// Direction text for a pose: elevation above 60° is overhead; otherwise the
/// azimuth's distance from the in-boundary center picks front (< 45°),
/// side (< 135°) or back.
pub fn direction_bucket(theta: f64, phi: f64, center_theta: f64) -> ViewDirection {
    if phi > 60.0 {
        return ViewDirection::Overhead;
    }
    let d = (theta - center_theta).rem_euclid(360.0);
    let d = d.min(360.0 - d);
    if d < 45.0 {
        ViewDirection::Front
    } else if d < 135.0 {
        ViewDirection::Side
    } else {
        ViewDirection::Back
    }
}

/// Reference prompts get the whole-photo framing; training prompts get the
/// view direction appended.
pub fn compose_prompt(y: &str, direction: Option<ViewDirection>, reference: bool) -> String {
    if reference {
        return format!("{REFERENCE_PREFIX}{y}{REFERENCE_SUFFIX}");
    }
    match direction {
        Some(d) => format!("{y}, {} view", d.as_str()),
        None => y.to_string(),
    }
}
