use proptest::prelude::*;

use glovekit::protocol::{
    encode_channels, encode_pwm_command, parse_pwm_command, PwmCommand, StreamParser, FRAME_LEN,
    MAX_RAW, SYNC,
};

fn channels() -> impl Strategy<Value = [u16; 5]> {
    prop::array::uniform5(0..=MAX_RAW)
}

fn encode_all(frames: &[[u16; 5]]) -> Vec<u8> {
    frames
        .iter()
        .flat_map(|f| encode_channels(*f).unwrap())
        .collect()
}

fn decode_chunks(bytes: &[u8], cuts: &[usize]) -> (Vec<[u16; 5]>, StreamParser) {
    let mut parser = StreamParser::new();
    let mut out = Vec::new();
    let mut start = 0;
    let mut points: Vec<usize> = cuts.iter().map(|c| c % (bytes.len() + 1)).collect();
    points.sort_unstable();
    points.push(bytes.len());
    for end in points {
        out.extend(
            parser
                .decode(&bytes[start..end])
                .iter()
                .map(|f| *f.channels()),
        );
        start = end;
    }
    (out, parser)
}

proptest! {
    #[test]
    fn frame_round_trip(ch in channels()) {
        let bytes = encode_channels(ch).unwrap();
        prop_assert_eq!(bytes.len(), FRAME_LEN);
        let mut parser = StreamParser::new();
        let frames = parser.decode(&bytes);
        prop_assert_eq!(frames.len(), 1);
        prop_assert_eq!(*frames[0].channels(), ch);
        prop_assert_eq!(parser.bytes_skipped(), 0);
        prop_assert_eq!(parser.pending(), 0);
    }

    #[test]
    fn any_chunking_yields_the_same_frames(
        frames in prop::collection::vec(channels(), 0..40),
        cuts in prop::collection::vec(any::<usize>(), 0..12),
    ) {
        let bytes = encode_all(&frames);
        let (decoded, parser) = decode_chunks(&bytes, &cuts);
        prop_assert_eq!(decoded, frames);
        prop_assert_eq!(parser.bytes_skipped(), 0);
        prop_assert_eq!(parser.bytes_received(), bytes.len() as u64);
    }

    #[test]
    fn garbage_prefix_is_skipped(
        garbage in prop::collection::vec(any::<u8>().prop_filter("no sync", |b| *b != SYNC), 0..64),
        frames in prop::collection::vec(channels(), 1..20),
    ) {
        let mut bytes = garbage.clone();
        bytes.extend(encode_all(&frames));
        let (decoded, parser) = decode_chunks(&bytes, &[]);
        prop_assert_eq!(decoded, frames);
        prop_assert_eq!(parser.bytes_skipped(), garbage.len() as u64);
    }

    #[test]
    fn single_corrupted_byte_costs_at_most_neighbours(
        frames in prop::collection::vec(channels(), 3..30),
        pos_seed in any::<usize>(),
        flip in 1u8..=255,
    ) {
        let mut bytes = encode_all(&frames);
        let pos = pos_seed % bytes.len();
        bytes[pos] ^= flip;
        let hit = pos / FRAME_LEN;
        let (decoded, _) = decode_chunks(&bytes, &[]);
        // Every frame away from the damaged one survives, in order.
        let intact: Vec<_> = frames
            .iter()
            .enumerate()
            .filter(|(i, _)| *i + 1 < hit || *i > hit + 1)
            .map(|(_, f)| *f)
            .collect();
        let mut it = decoded.iter();
        for f in &intact {
            prop_assert!(it.any(|d| d == f), "frame {:?} missing", f);
        }
    }

    #[test]
    fn offsets_track_stream_position(
        garbage in prop::collection::vec(any::<u8>().prop_filter("no sync", |b| *b != SYNC), 0..20),
        frames in prop::collection::vec(channels(), 1..10),
    ) {
        let mut bytes = garbage.clone();
        bytes.extend(encode_all(&frames));
        let mut parser = StreamParser::new();
        let found = parser.decode_with_offsets(&bytes);
        for (i, (offset, _)) in found.iter().enumerate() {
            prop_assert_eq!(*offset, (garbage.len() + i * FRAME_LEN) as u64);
        }
    }

    #[test]
    fn pwm_command_round_trip(duty in prop::array::uniform5(any::<u8>())) {
        let cmd = PwmCommand::new(duty);
        let line = encode_pwm_command(&cmd);
        prop_assert!(line.ends_with('\n'));
        prop_assert_eq!(parse_pwm_command(&line).unwrap(), cmd);
    }
}

#[test]
fn out_of_range_value_is_rejected_on_encode() {
    assert!(encode_channels([0, 0, 1024, 0, 0]).is_err());
}
