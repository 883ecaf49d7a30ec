use fuseflow::io::{
    decode_flo, read_events, read_flo, write_events, Event, EventFormat, EventStream, Polarity,
};
use fuseflow::GridShape;

#[test]
fn flo_layout_is_little_endian_row_major_interleaved() {
    let mut bytes = b"PIEH".to_vec();
    for v in [3i32, 2] {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let px = [
        (1.0f32, -1.0f32),
        (0.5, 0.25),
        (-3.0, 4.0),
        (0.0, 0.0),
        (7.5, -7.5),
        (2.0, 1.0),
    ];
    for (u, v) in px {
        bytes.extend_from_slice(&u.to_le_bytes());
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let flow = decode_flo(&bytes, "hand.flo").unwrap();
    assert_eq!((flow.shape().width, flow.shape().height), (3, 2));
    assert_eq!(flow.get(2, 0), Some((-3.0, 4.0)));
    assert_eq!(flow.get(0, 1), Some((0.0, 0.0)));
    assert_eq!(flow.get(1, 1), Some((7.5, -7.5)));
    assert_eq!(flow.get(2, 1), Some((2.0, 1.0)));
}

#[test]
fn file_errors_name_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.flo");
    let msg = read_flo(&missing).unwrap_err().to_string();
    assert!(msg.contains("missing.flo"), "{msg}");

    let short = dir.path().join("short.flo");
    std::fs::write(&short, b"PIEH\x02\x00\x00\x00").unwrap();
    let msg = read_flo(&short).unwrap_err().to_string();
    assert!(msg.contains("short.flo"), "{msg}");

    let csv = dir.path().join("events.csv");
    std::fs::write(&csv, "100,1,1,1\n200,2,2,0\n").unwrap();
    let shape = GridShape::new(4, 4).unwrap();
    let msg = read_events(&csv, EventFormat::Csv, Some(shape))
        .unwrap_err()
        .to_string();
    assert!(msg.contains("events.csv") && msg.contains('2'), "{msg}");
}

#[test]
fn event_files_round_trip_through_disk() {
    let dir = tempfile::tempdir().unwrap();
    let shape = GridShape::new(9, 7).unwrap();
    let events = vec![
        Event::new(0, 0, 0, Polarity::On),
        Event::new(10, 8, 6, Polarity::Off),
        Event::new(10, 3, 4, Polarity::On),
        Event::new(u32::MAX as u64 + 5, 1, 2, Polarity::Off),
    ];
    let stream = EventStream::new(shape, events).unwrap();
    for (format, name) in [(EventFormat::Bin, "e.evt1"), (EventFormat::Csv, "e.csv")] {
        let path = dir.path().join(name);
        write_events(&path, format, &stream).unwrap();
        let back = read_events(&path, format, Some(shape)).unwrap();
        assert_eq!(back, stream);
    }
    // the binary header carries the sensor size
    let back = read_events(&dir.path().join("e.evt1"), EventFormat::Bin, None).unwrap();
    assert_eq!(back.shape(), shape);
}
