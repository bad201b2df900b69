//! CSV formats: embeddings, landmarks, face models, poses, pairs and protocols.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use nalgebra::{Vector2, Vector3};

use super::binary::{record_id, split_record_id};
use super::IoError;
use crate::embedding::Embedding;
use crate::eval::{FoldProtocol, LabeledPair};
use crate::pose::{FaceModel3D, HeadPose, LandmarkSet, NUM_LANDMARKS};

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(r)
}

fn header<R: Read>(rdr: &mut csv::Reader<R>) -> Result<Vec<String>, IoError> {
    Ok(rdr.headers()?.iter().map(str::to_string).collect())
}

fn parse_f64(field: &str, line: u64, what: &str) -> Result<f64, IoError> {
    field
        .parse::<f64>()
        .map_err(|_| IoError::format(format!("line {line}: cannot parse {what} `{field}`")))
}

fn line_of(rec: &csv::StringRecord) -> u64 {
    rec.position().map_or(0, |p| p.line())
}

fn optional_yaw(field: &str, line: u64) -> Result<Option<f64>, IoError> {
    if field.is_empty() {
        return Ok(None);
    }
    let v = parse_f64(field, line, "yaw")?;
    Ok((!v.is_nan()).then_some(v))
}

/// `id,yaw,v0,...`; the id is `subject/image` when a subject is known, an
/// empty or `NaN` yaw means unknown.
pub fn write_embeddings_csv<W: Write>(w: W, embeddings: &[Embedding]) -> Result<(), IoError> {
    let dim = embeddings.first().map_or(0, Embedding::dim);
    let mut wtr = csv::Writer::from_writer(w);
    let mut head = vec!["id".to_string(), "yaw".to_string()];
    head.extend((0..dim).map(|k| format!("v{k}")));
    wtr.write_record(&head)?;
    for e in embeddings {
        if e.dim() != dim {
            return Err(IoError::format(format!("embedding `{}` has dimension {}, expected {dim}", e.id, e.dim())));
        }
        let mut row = vec![record_id(e), e.yaw.map_or_else(|| "NaN".to_string(), |y| y.to_string())];
        row.extend(e.values.iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_embeddings_csv<R: Read>(r: R) -> Result<Vec<Embedding>, IoError> {
    let mut rdr = reader(r);
    let head = header(&mut rdr)?;
    if head.len() < 2 || head[0] != "id" || head[1] != "yaw" {
        return Err(IoError::format("embedding CSV must start with `id,yaw`"));
    }
    let dim = head.len() - 2;
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != dim + 2 {
            return Err(IoError::format(format!("line {line}: expected {} fields, got {}", dim + 2, rec.len())));
        }
        let (id, subject_id) = split_record_id(&rec[0]);
        let values = (2..rec.len())
            .map(|k| parse_f64(&rec[k], line, "value"))
            .collect::<Result<Vec<_>, _>>()?;
        out.push(Embedding {
            id,
            subject_id,
            yaw: optional_yaw(&rec[1], line)?,
            values,
        });
    }
    Ok(out)
}

/// `image_id,x0,y0,...,x20,y20[,v0..v20]`
pub fn write_landmarks<W: Write>(w: W, sets: &[LandmarkSet]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    let with_vis = sets.iter().any(|s| s.visibility().iter().any(|v| !v));
    let mut head = vec!["image_id".to_string()];
    for k in 0..NUM_LANDMARKS {
        head.push(format!("x{k}"));
        head.push(format!("y{k}"));
    }
    if with_vis {
        head.extend((0..NUM_LANDMARKS).map(|k| format!("v{k}")));
    }
    wtr.write_record(&head)?;
    for s in sets {
        let mut row = vec![s.image_id.clone()];
        for p in s.points() {
            row.push(p.x.to_string());
            row.push(p.y.to_string());
        }
        if with_vis {
            row.extend(s.visibility().iter().map(|v| if *v { "1" } else { "0" }.to_string()));
        }
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn read_landmarks<R: Read>(r: R) -> Result<Vec<LandmarkSet>, IoError> {
    let mut rdr = reader(r);
    let head = header(&mut rdr)?;
    let base = 1 + 2 * NUM_LANDMARKS;
    let with_vis = match head.len() {
        n if n == base => false,
        n if n == base + NUM_LANDMARKS => true,
        n => {
            return Err(IoError::format(format!(
                "landmark CSV needs {base} or {} columns, got {n}",
                base + NUM_LANDMARKS
            )))
        }
    };
    if head[0] != "image_id" {
        return Err(IoError::format("landmark CSV must start with `image_id`"));
    }
    let mut out = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != head.len() {
            return Err(IoError::format(format!("line {line}: expected {} fields, got {}", head.len(), rec.len())));
        }
        let points = (0..NUM_LANDMARKS)
            .map(|k| {
                Ok(Vector2::new(
                    parse_f64(&rec[1 + 2 * k], line, "x")?,
                    parse_f64(&rec[2 + 2 * k], line, "y")?,
                ))
            })
            .collect::<Result<Vec<_>, IoError>>()?;
        let vis = if with_vis {
            Some(
                (0..NUM_LANDMARKS)
                    .map(|k| match &rec[base + k] {
                        "1" => Ok(true),
                        "0" => Ok(false),
                        other => Err(IoError::format(format!("line {line}: visibility must be 0 or 1, got `{other}`"))),
                    })
                    .collect::<Result<Vec<_>, _>>()?,
            )
        } else {
            None
        };
        let set = LandmarkSet::new(&rec[0], points, vis)
            .map_err(|e| IoError::format(format!("line {line}: {e}")))?;
        out.push(set);
    }
    Ok(out)
}

/// `landmark_id,X,Y,Z` in millimetres.
pub fn write_face_model<W: Write>(w: W, model: &FaceModel3D) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["landmark_id", "X", "Y", "Z"])?;
    for (id, p) in model.landmark_ids().iter().zip(model.points()) {
        wtr.write_record([id.to_string(), p.x.to_string(), p.y.to_string(), p.z.to_string()])?;
    }
    wtr.flush()?;
    Ok(())
}

/// Rows may come in any order but every label 1..=21 must appear once.
pub fn read_face_model<R: Read>(r: R) -> Result<FaceModel3D, IoError> {
    let mut rdr = reader(r);
    let head = header(&mut rdr)?;
    if head != ["landmark_id", "X", "Y", "Z"] {
        return Err(IoError::format("face model CSV header must be `landmark_id,X,Y,Z`"));
    }
    let mut by_id = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != 4 {
            return Err(IoError::format(format!("line {line}: expected 4 fields")));
        }
        let id: usize = rec[0]
            .parse()
            .map_err(|_| IoError::format(format!("line {line}: bad landmark id `{}`", &rec[0])))?;
        if !(1..=NUM_LANDMARKS).contains(&id) {
            return Err(IoError::format(format!("line {line}: landmark id {id} outside 1..={NUM_LANDMARKS}")));
        }
        let p = Vector3::new(
            parse_f64(&rec[1], line, "X")?,
            parse_f64(&rec[2], line, "Y")?,
            parse_f64(&rec[3], line, "Z")?,
        );
        if by_id.insert(id, p).is_some() {
            return Err(IoError::format(format!("line {line}: duplicate landmark id {id}")));
        }
    }
    if by_id.len() != NUM_LANDMARKS {
        return Err(IoError::format(format!("face model has {} of {NUM_LANDMARKS} landmarks", by_id.len())));
    }
    FaceModel3D::new(by_id.into_values().collect()).map_err(|e| IoError::format(e.to_string()))
}

/// One pose row; `None` is written as a row of `NaN`s.
pub type PoseRow = (String, Option<HeadPose>);

/// `image_id,yaw_rad,pitch_rad,roll_rad,rmse_px`
pub fn write_poses<W: Write>(w: W, rows: &[PoseRow]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["image_id", "yaw_rad", "pitch_rad", "roll_rad", "rmse_px"])?;
    for (id, pose) in rows {
        let vals = match pose {
            Some(p) => [p.yaw, p.pitch, p.roll, p.reprojection_rmse],
            None => [f64::NAN; 4],
        };
        let mut row = vec![id.clone()];
        row.extend(vals.iter().map(f64::to_string));
        wtr.write_record(&row)?;
    }
    wtr.flush()?;
    Ok(())
}

/// Reads `image_id → yaw` from a pose CSV, skipping failed (`NaN`) rows.
pub fn read_pose_yaws<R: Read>(r: R) -> Result<BTreeMap<String, f64>, IoError> {
    let mut rdr = reader(r);
    let head = header(&mut rdr)?;
    if head.len() < 2 || head[0] != "image_id" || head[1] != "yaw_rad" {
        return Err(IoError::format("pose CSV must start with `image_id,yaw_rad`"));
    }
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if let Some(y) = optional_yaw(rec.get(1).unwrap_or(""), line)? {
            out.insert(rec[0].to_string(), y);
        }
    }
    Ok(out)
}

fn parse_label(field: &str, line: u64) -> Result<bool, IoError> {
    match field {
        "1" => Ok(true),
        "0" => Ok(false),
        other => Err(IoError::format(format!("line {line}: label must be 1 or 0, got `{other}`"))),
    }
}

/// `id1,id2,label`
pub fn write_pairs<W: Write>(w: W, pairs: &[LabeledPair]) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["id1", "id2", "label"])?;
    for p in pairs {
        wtr.write_record([p.id1.as_str(), p.id2.as_str(), if p.same { "1" } else { "0" }])?;
    }
    wtr.flush()?;
    Ok(())
}

/// `fold,id1,id2,label` with folds numbered from 0.
pub fn write_protocol<W: Write>(w: W, protocol: &FoldProtocol) -> Result<(), IoError> {
    let mut wtr = csv::Writer::from_writer(w);
    wtr.write_record(["fold", "id1", "id2", "label"])?;
    for (k, fold) in protocol.folds.iter().enumerate() {
        for p in fold {
            wtr.write_record([k.to_string().as_str(), &p.id1, &p.id2, if p.same { "1" } else { "0" }])?;
        }
    }
    wtr.flush()?;
    Ok(())
}

/// Reads a pair list or a protocol file, told apart by the header. A plain
/// pair list comes back as a single fold.
pub fn read_pairs<R: Read>(r: R) -> Result<FoldProtocol, IoError> {
    let mut rdr = reader(r);
    let head = header(&mut rdr)?;
    let with_fold = if head == ["id1", "id2", "label"] {
        false
    } else if head == ["fold", "id1", "id2", "label"] {
        true
    } else {
        return Err(IoError::format("pair CSV header must be `id1,id2,label` or `fold,id1,id2,label`"));
    };
    let mut folds: BTreeMap<usize, Vec<LabeledPair>> = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        let line = line_of(&rec);
        if rec.len() != head.len() {
            return Err(IoError::format(format!("line {line}: expected {} fields", head.len())));
        }
        let (fold, off) = if with_fold {
            let f = rec[0]
                .parse::<usize>()
                .map_err(|_| IoError::format(format!("line {line}: bad fold `{}`", &rec[0])))?;
            (f, 1)
        } else {
            (0, 0)
        };
        folds.entry(fold).or_default().push(LabeledPair {
            id1: rec[off].to_string(),
            id2: rec[off + 1].to_string(),
            same: parse_label(&rec[off + 2], line)?,
        });
    }
    if with_fold {
        if let Some((k, _)) = folds.keys().enumerate().find(|(i, k)| i != *k) {
            return Err(IoError::format(format!("fold numbers must be contiguous from 0, missing {k}")));
        }
    }
    Ok(FoldProtocol {
        folds: folds.into_values().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pose::{project_model, CameraIntrinsics};

    #[test]
    fn embedding_csv_round_trip() {
        let es = vec![
            Embedding::new(vec![0.1, -2.5]).with_id("a").with_subject("s").with_yaw(-0.3),
            Embedding::new(vec![1e-17, 3.0]).with_id("b"),
        ];
        let mut buf = Vec::new();
        write_embeddings_csv(&mut buf, &es).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("id,yaw,v0,v1\ns/a,-0.3,0.1,-2.5\nb,NaN,"));
        assert_eq!(read_embeddings_csv(&buf[..]).unwrap(), es);
    }

    #[test]
    fn embedding_csv_empty_yaw_is_unknown() {
        let e = read_embeddings_csv("id,yaw,v0\nx,,1.5\n".as_bytes()).unwrap();
        assert_eq!(e[0].yaw, None);
        assert!(read_embeddings_csv("id,yaw,v0\nx,0,abc\n".as_bytes()).is_err());
        assert!(read_embeddings_csv("id,yaw,v0\nx,0\n".as_bytes()).is_err());
    }

    #[test]
    fn landmark_round_trip_with_and_without_visibility() {
        let model = FaceModel3D::builtin();
        let cam = CameraIntrinsics::for_image(640.0, 480.0).unwrap();
        let pose = HeadPose::new(0.3, 0.1, -0.05, Vector3::new(10.0, -5.0, 900.0));
        let pts = project_model(&model, &pose, &cam);
        let full = LandmarkSet::new("im0", pts.clone(), None).unwrap();
        let mut vis = vec![true; NUM_LANDMARKS];
        vis[3] = false;
        let partial = LandmarkSet::new("im1", pts, Some(vis)).unwrap();

        let mut buf = Vec::new();
        write_landmarks(&mut buf, std::slice::from_ref(&full)).unwrap();
        let head = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(head.lines().next().unwrap().split(',').count(), 43);
        assert_eq!(read_landmarks(&buf[..]).unwrap(), vec![full.clone()]);

        let mut buf = Vec::new();
        write_landmarks(&mut buf, &[full.clone(), partial.clone()]).unwrap();
        assert_eq!(read_landmarks(&buf[..]).unwrap(), vec![full, partial]);
    }

    #[test]
    fn face_model_round_trip_any_row_order() {
        let model = FaceModel3D::builtin();
        let mut buf = Vec::new();
        write_face_model(&mut buf, &model).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines: Vec<&str> = text.lines().collect();
        lines[1..].reverse();
        let shuffled = lines.join("\n");
        assert_eq!(read_face_model(shuffled.as_bytes()).unwrap(), model);
        let missing: String = text.lines().take(21).collect::<Vec<_>>().join("\n");
        assert!(read_face_model(missing.as_bytes()).is_err());
    }

    #[test]
    fn poses_written_and_yaws_read_back() {
        let p = HeadPose::new(0.5, 0.0, 0.0, Vector3::new(0.0, 0.0, 1000.0));
        let mut buf = Vec::new();
        write_poses(&mut buf, &[("a".into(), Some(p)), ("b".into(), None)]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.contains("\nb,NaN,NaN,NaN,NaN\n"));
        let yaws = read_pose_yaws(&buf[..]).unwrap();
        assert_eq!(yaws.len(), 1);
        assert_eq!(yaws["a"], 0.5);
    }

    #[test]
    fn pairs_and_protocols() {
        let lp = |a: &str, b: &str, same| LabeledPair {
            id1: a.into(),
            id2: b.into(),
            same,
        };
        let proto = FoldProtocol {
            folds: vec![vec![lp("a", "b", true)], vec![lp("c", "d", false), lp("c", "e", true)]],
        };
        let mut buf = Vec::new();
        write_protocol(&mut buf, &proto).unwrap();
        assert_eq!(read_pairs(&buf[..]).unwrap(), proto);

        let mut buf = Vec::new();
        write_pairs(&mut buf, &proto.folds[1]).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "id1,id2,label\nc,d,0\nc,e,1\n");
        assert_eq!(read_pairs(&buf[..]).unwrap().folds, vec![proto.folds[1].clone()]);

        assert!(read_pairs("id1,id2,label\na,b,2\n".as_bytes()).is_err());
        assert!(read_pairs("fold,id1,id2,label\n1,a,b,1\n".as_bytes()).is_err());
        assert!(read_pairs("x,y\n".as_bytes()).is_err());
    }
}
