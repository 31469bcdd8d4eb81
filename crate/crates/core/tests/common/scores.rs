use atelier_core::labanstr::{
    ActionAttrs, Beat, Column, Direction, Facing, Flexion, LabanToken, Level, Meter, Path, Position, Rotation, Score,
    SpatialAttrs, TimeAttrs,
};
use atelier_core::rng::SeededRng;
use rand::seq::SliceRandom;
use rand::Rng;

fn pick<T: Copy>(rng: &mut SeededRng, all: &[T]) -> T {
    all[rng.random_range(0..all.len())]
}

fn random_beat(rng: &mut SeededRng, max_whole: i64) -> Beat {
    let denom = pick(rng, &[1i64, 2, 3, 4, 6, 8]);
    Beat::new(rng.random_range(0..=max_whole * denom), denom)
}

pub fn random_token(rng: &mut SeededRng, meter: Meter, column: Column, start: Beat, duration: Beat) -> LabanToken {
    LabanToken {
        time: TimeAttrs { meter, start, duration },
        spatial: SpatialAttrs {
            path: pick(rng, Path::ALL),
            facing: pick(rng, Facing::ALL),
            position: pick(rng, Position::ALL),
        },
        action: ActionAttrs {
            column,
            direction: pick(rng, Direction::ALL),
            level: pick(rng, Level::ALL),
            rotation: pick(rng, Rotation::ALL),
            flexion: pick(rng, Flexion::ALL),
        },
    }
}

/// A valid score: each column is a forward walk of tokens with random gaps,
/// then the token list is shuffled.
pub fn random_valid_score(rng: &mut SeededRng, max_tokens: usize) -> Score {
    let meter = pick(rng, &[Meter::COMMON, Meter { numerator: 3, denominator: 4 }, Meter { numerator: 6, denominator: 8 }]);
    let count = rng.random_range(0..=max_tokens);
    let mut cursor = [Beat::from_integer(0); Column::COUNT];
    let mut tokens = Vec::with_capacity(count);
    for _ in 0..count {
        let column = pick(rng, Column::ALL);
        let start = cursor[column.index()] + random_beat(rng, 2);
        let mut duration = random_beat(rng, 3);
        if duration == Beat::from_integer(0) {
            duration = Beat::new(1, 4);
        }
        cursor[column.index()] = start + duration;
        tokens.push(random_token(rng, meter, column, start, duration));
    }
    tokens.shuffle(rng);
    Score { meter, tokens }
}

/// Tokens placed anywhere, so overlaps are common.
pub fn random_overlapping_score(rng: &mut SeededRng, max_tokens: usize) -> Score {
    let count = rng.random_range(0..=max_tokens);
    let tokens = (0..count)
        .map(|_| {
            let column = pick(rng, &Column::ALL[..3]);
            let start = random_beat(rng, 12);
            let duration = random_beat(rng, 3);
            random_token(rng, Meter::COMMON, column, start, duration)
        })
        .collect();
    Score { meter: Meter::COMMON, tokens }
}
