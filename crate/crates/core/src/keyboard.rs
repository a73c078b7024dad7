//! Physical key coordinates for a staggered QWERTY keyboard.

use std::collections::HashMap;

/// Key positions on a staggered keyboard: `(row, x)` where `x` includes the
/// row's horizontal offset in key widths.
#[derive(Debug, Clone)]
pub struct KeyboardLayout {
    positions: HashMap<char, (usize, f64)>,
}

const QWERTY_ROWS: [(&str, f64); 4] = [
    ("1234567890", 0.0),
    ("qwertyuiop", 0.5),
    ("asdfghjkl", 0.75),
    ("zxcvbnm", 1.25),
];

impl KeyboardLayout {
    pub fn qwerty() -> Self {
        Self::from_rows(&QWERTY_ROWS)
    }

    pub fn from_rows(rows: &[(&str, f64)]) -> Self {
        let mut positions = HashMap::new();
        for (row, (keys, offset)) in rows.iter().enumerate() {
            for (col, c) in keys.chars().enumerate() {
                positions.insert(c, (row, col as f64 + offset));
            }
        }
        Self { positions }
    }

    pub fn position(&self, key: char) -> Option<(usize, f64)> {
        self.positions.get(&key).copied()
    }

    /// Keys at distance one: horizontal neighbours on the same row and keys on
    /// an adjacent row whose centres are less than one key width apart.
    pub fn is_neighbor(&self, a: char, b: char) -> bool {
        let (Some((ra, xa)), Some((rb, xb))) = (self.position(a), self.position(b)) else {
            return false;
        };
        let dx = (xa - xb).abs();
        match ra.abs_diff(rb) {
            0 => (dx - 1.0).abs() < 1e-9,
            1 => dx < 1.0 - 1e-9,
            _ => false,
        }
    }

    pub fn neighbors(&self, key: char) -> Vec<char> {
        let mut out: Vec<char> = self
            .positions
            .keys()
            .copied()
            .filter(|&other| other != key && self.is_neighbor(key, other))
            .collect();
        out.sort_unstable();
        out
    }
}
