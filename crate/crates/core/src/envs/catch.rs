use alloc::vec::Vec;

use super::{check_action, Environment, Observation, StepResult};
use crate::codec::Archive;
use crate::rng::Stream;
use crate::{Error, Result};

pub const LEFT: usize = 0;
pub const STAY: usize = 1;
pub const RIGHT: usize = 2;

const SIZE: usize = 10;
const LIVES: u32 = 3;

/// Catch with lives on a 10×10 screen.
///
/// A 3-cell paddle sits on the bottom row. Each ball appears in a random column
/// of the top row on the step after the previous ball resolved, then falls one
/// row per step. Reaching the bottom row pays +1 when the paddle covers the
/// ball's column and −1 (and one life) otherwise, so every ball takes exactly
/// 10 steps. The game ends when the third life is lost.
#[derive(Debug, Clone)]
pub struct CatchLives {
    rng: Stream,
    paddle: usize,
    ball: Option<(usize, usize)>,
    lives: u32,
    game_over: bool,
}

impl CatchLives {
    pub const STEPS_PER_BALL: usize = SIZE;

    pub fn new(rng: Stream) -> Self {
        Self { rng, paddle: SIZE / 2, ball: None, lives: LIVES, game_over: false }
    }

    pub fn lives(&self) -> u32 {
        self.lives
    }

    /// Paddle center column.
    pub fn paddle(&self) -> usize {
        self.paddle
    }

    /// `(row, column)` of the falling ball, if one is in play.
    pub fn ball(&self) -> Option<(usize, usize)> {
        self.ball
    }

    fn render(&self) -> Observation {
        let mut obs = Observation::zeros(SIZE, SIZE);
        for x in self.paddle - 1..=self.paddle + 1 {
            obs.set(x, SIZE - 1, 255);
        }
        if let Some((row, col)) = self.ball {
            obs.set(col, row, 255);
        }
        obs
    }
}

impl Environment for CatchLives {
    fn name(&self) -> &'static str {
        "CatchLives"
    }

    fn num_actions(&self) -> usize {
        3
    }

    fn frame_shape(&self) -> (usize, usize) {
        (SIZE, SIZE)
    }

    fn reset(&mut self) -> Observation {
        self.paddle = SIZE / 2;
        self.ball = None;
        self.lives = LIVES;
        self.game_over = false;
        self.render()
    }

    fn step(&mut self, action: usize) -> Result<StepResult> {
        check_action(action, 3)?;
        if self.game_over {
            return Err(crate::error::contract("step after game over; reset first"));
        }
        match action {
            LEFT => self.paddle = (self.paddle - 1).max(1),
            RIGHT => self.paddle = (self.paddle + 1).min(SIZE - 2),
            _ => {}
        }
        let mut reward = 0.0;
        let mut life_lost = false;
        let mut resolved = false;
        match self.ball {
            None => self.ball = Some((0, self.rng.below(SIZE))),
            Some((row, col)) => {
                let row = row + 1;
                self.ball = Some((row, col));
                if row == SIZE - 1 {
                    resolved = true;
                    if col.abs_diff(self.paddle) <= 1 {
                        reward = 1.0;
                    } else {
                        reward = -1.0;
                        life_lost = true;
                        self.lives -= 1;
                    }
                }
            }
        }
        let observation = self.render();
        if resolved {
            self.ball = None;
        }
        self.game_over = self.lives == 0;
        Ok(StepResult { observation, reward, game_over: self.game_over, life_lost, lives_remaining: self.lives })
    }

    fn save_state(&self) -> Vec<u8> {
        let mut a = Archive::new();
        let (has_ball, row, col) = match self.ball {
            Some((r, c)) => (1, r as u64, c as u64),
            None => (0, 0, 0),
        };
        a.push_u64(
            "catch",
            alloc::vec![self.paddle as u64, has_ball, row, col, u64::from(self.lives), self.game_over as u64],
        )
        .expect("fresh archive");
        a.push_u8("rng", self.rng.to_bytes().to_vec()).expect("fresh archive");
        a.encode()
    }

    fn load_state(&mut self, bytes: &[u8]) -> Result<()> {
        let a = Archive::decode(bytes)?;
        let v = a.u64s_exact("catch", 6)?;
        if v[0] < 1 || v[0] as usize > SIZE - 2 || v[2] as usize >= SIZE || v[3] as usize >= SIZE || v[4] > u64::from(LIVES) {
            return Err(Error::Decode("catch state out of range".into()));
        }
        self.paddle = v[0] as usize;
        self.ball = (v[1] != 0).then_some((v[2] as usize, v[3] as usize));
        self.lives = v[4] as u32;
        self.game_over = v[5] != 0;
        self.rng = Stream::from_bytes(a.u8s("rng")?)?;
        Ok(())
    }
}
