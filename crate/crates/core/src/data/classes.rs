use std::fmt;

pub const NUM_DISTRACTION_CLASSES: usize = 10;
/// Seven emotions plus Non-Face.
pub const NUM_EMOTION_CLASSES: usize = 8;
/// The teacher only predicts the seven facial emotions.
pub const NUM_TEACHER_EMOTIONS: usize = 7;
pub const NON_FACE: usize = 7;

const DISTRACTION_NAMES: [&str; NUM_DISTRACTION_CLASSES] = [
    "Safe Driving",
    "Phone Right",
    "Phone Left",
    "Text Right",
    "Text Left",
    "Adjusting Radio",
    "Drinking",
    "Hair or Makeup",
    "Reaching Behind",
    "Talking to Passenger",
];

const EMOTION_NAMES: [&str; NUM_EMOTION_CLASSES] =
    ["happy", "sad", "surprise", "fear", "disgust", "anger", "neutral", "non-face"];

/// Driving posture C0..C9.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct DistractionClass(u8);

impl DistractionClass {
    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_DISTRACTION_CLASSES).then_some(DistractionClass(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        DISTRACTION_NAMES[self.index()]
    }

    pub fn code(self) -> String {
        format!("C{}", self.0)
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..NUM_DISTRACTION_CLASSES).map(|i| DistractionClass(i as u8))
    }
}

impl fmt::Display for DistractionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}) {}", self.code(), self.name())
    }
}

/// Emotion 0..7; index 7 is Non-Face.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EmotionClass(u8);

impl EmotionClass {
    pub const NON_FACE: EmotionClass = EmotionClass(NON_FACE as u8);

    pub fn new(index: usize) -> Option<Self> {
        (index < NUM_EMOTION_CLASSES).then_some(EmotionClass(index as u8))
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }

    pub fn name(self) -> &'static str {
        EMOTION_NAMES[self.index()]
    }

    pub fn is_non_face(self) -> bool {
        self == Self::NON_FACE
    }

    pub fn all() -> impl Iterator<Item = Self> {
        (0..NUM_EMOTION_CLASSES).map(|i| EmotionClass(i as u8))
    }
}

impl fmt::Display for EmotionClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
