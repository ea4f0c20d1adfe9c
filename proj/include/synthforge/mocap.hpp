#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "synthforge/error.hpp"
#include "synthforge/image.hpp"
#include "synthforge/image_io.hpp"
#include "synthforge/log.hpp"

namespace synthforge::mocap {

struct Vec3 {
    double x = 0, y = 0, z = 0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }
    Vec3 normalized() const {
        double n = norm();
        return {x / n, y / n, z / n};
    }
};

// Unit quaternion (w, x, y, z), body-to-world. q1 * q2 applies q2 first.
struct Quat {
    double w = 1, x = 0, y = 0, z = 0;

    double dot(const Quat& o) const { return w * o.w + x * o.x + y * o.y + z * o.z; }
    double norm() const { return std::sqrt(dot(*this)); }

    Quat normalized() const {
        double n = norm();
        return {w / n, x / n, y / n, z / n};
    }

    Quat conjugate() const { return {w, -x, -y, -z}; }

    Quat operator*(const Quat& o) const {
        return {w * o.w - x * o.x - y * o.y - z * o.z,
                w * o.x + x * o.w + y * o.z - z * o.y,
                w * o.y - x * o.z + y * o.w + z * o.x,
                w * o.z + x * o.y - y * o.x + z * o.w};
    }

    Vec3 rotate(const Vec3& v) const {
        // q v q^-1 via the expanded cross-product form
        Vec3 u{x, y, z};
        Vec3 t{u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x};
        t = t * 2.0;
        Vec3 tt{u.y * t.z - u.z * t.y, u.z * t.x - u.x * t.z, u.x * t.y - u.y * t.x};
        return {v.x + w * t.x + tt.x, v.y + w * t.y + tt.y, v.z + w * t.z + tt.z};
    }

    static Quat from_axis_angle(const Vec3& axis, double angle) {
        Vec3 a = axis.normalized();
        double h = 0.5 * angle;
        double s = std::sin(h);
        return {std::cos(h), a.x * s, a.y * s, a.z * s};
    }
};

// Shortest-arc spherical interpolation; sign-flips the second endpoint to
// stay on the same cover of SO(3).
inline Quat slerp(const Quat& a, Quat b, double t) {
    double d = a.dot(b);
    if (d < 0.0) {
        b = {-b.w, -b.x, -b.y, -b.z};
        d = -d;
    }
    if (d > 1.0 - 1e-10) {
        // nearly parallel: lerp + renormalize
        Quat q{a.w + (b.w - a.w) * t, a.x + (b.x - a.x) * t,
               a.y + (b.y - a.y) * t, a.z + (b.z - a.z) * t};
        return q.normalized();
    }
    double omega = std::acos(std::min(1.0, d));
    double so = std::sin(omega);
    double ka = std::sin((1.0 - t) * omega) / so;
    double kb = std::sin(t * omega) / so;
    Quat q{ka * a.w + kb * b.w, ka * a.x + kb * b.x, ka * a.y + kb * b.y, ka * a.z + kb * b.z};
    return q.normalized();
}

struct Pose {
    double t = 0;  // seconds
    Vec3 p;        // meters
    Quat q;        // body-to-world
};

enum class Subject { Camera, Object };

struct PoseTrack {
    Subject subject = Subject::Object;
    std::vector<Pose> samples;  // strictly increasing timestamps
    double rate = 0;            // Hz, mean sample rate
};

struct SyncResult {
    double offset_s = 0;  // mocap time minus video time
    double peak_correlation = 0;
    double common_rate_hz = 0;
    bool low_confidence = false;
};

// Viewing geometry of one frame: direction from object origin toward the
// camera in the object frame, plus metric depth.
struct ViewSample {
    std::int64_t frame_index = 0;
    Vec3 v;         // unit vector
    double depth = 0;  // meters
    Pose rel;       // camera-to-object relative transform
};

// Uniformly sampled scalar time series.
struct Signal {
    std::vector<double> values;
    double rate = 0;  // Hz
};

// CSV schema: header "t,px,py,pz,qw,qx,qy,qz", '#' comment lines ignored.
// Rows with non-finite or unparseable fields are dropped (mocap dropouts are
// routine); the drop count is reported through dropped_rows when given.
inline PoseTrack parse_pose_track(const std::string& path, Subject subject,
                                  int* dropped_rows = nullptr) {
    std::ifstream in(path);
    if (!in) raise(ErrorKind::Io, "cannot open pose track " + path);

    auto trim = [](std::string s) {
        auto issp = [](unsigned char c) { return std::isspace(c) != 0; };
        while (!s.empty() && issp(s.front())) s.erase(s.begin());
        while (!s.empty() && issp(s.back())) s.pop_back();
        return s;
    };

    std::string line;
    std::string header;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        header = t;
        break;
    }
    std::string normalized_header;
    for (char c : header) {
        if (!std::isspace(static_cast<unsigned char>(c))) normalized_header += c;
    }
    if (normalized_header != "t,px,py,pz,qw,qx,qy,qz") {
        raise(ErrorKind::Format, "unexpected pose CSV header in " + path);
    }

    PoseTrack track;
    track.subject = subject;
    int dropped = 0;
    while (std::getline(in, line)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        std::stringstream ss(t);
        double fields[8];
        bool ok = true;
        for (int i = 0; i < 8 && ok; ++i) {
            std::string cell;
            if (!std::getline(ss, cell, ',')) {
                ok = false;
                break;
            }
            try {
                std::size_t used = 0;
                fields[i] = std::stod(trim(cell), &used);
            } catch (const std::exception&) {
                ok = false;
                break;
            }
            if (!std::isfinite(fields[i])) ok = false;
        }
        if (ok) {
            Quat q{fields[4], fields[5], fields[6], fields[7]};
            if (q.norm() < 1e-12) ok = false;
            if (ok) {
                Pose pose{fields[0], {fields[1], fields[2], fields[3]}, q.normalized()};
                if (!track.samples.empty() && pose.t <= track.samples.back().t) {
                    raise(ErrorKind::Format, "timestamps not strictly increasing in " + path);
                }
                track.samples.push_back(pose);
                continue;
            }
        }
        ++dropped;
    }
    if (dropped > 0) {
        log_warn("dropped " + std::to_string(dropped) + " invalid rows from " + path);
    }
    if (dropped_rows) *dropped_rows = dropped;
    if (track.samples.size() < 2) {
        raise(ErrorKind::InsufficientData, "pose track needs at least 2 valid rows: " + path);
    }
    double span = track.samples.back().t - track.samples.front().t;
    track.rate = span > 0 ? (track.samples.size() - 1) / span : 0;
    return track;
}

// Linear position, shortest-arc slerp rotation. Exact samples are returned
// verbatim at exact timestamps.
inline Pose interpolate_pose(const PoseTrack& track, double t) {
    const auto& s = track.samples;
    if (s.size() < 2) raise(ErrorKind::InsufficientData, "track too short to interpolate");
    if (t < s.front().t || t > s.back().t) {
        raise(ErrorKind::OutOfRange, "query time outside track span");
    }
    auto it = std::lower_bound(s.begin(), s.end(), t,
                               [](const Pose& a, double v) { return a.t < v; });
    if (it != s.end() && it->t == t) return *it;
    std::size_t hi = static_cast<std::size_t>(it - s.begin());
    std::size_t lo = hi - 1;
    double u = (t - s[lo].t) / (s[hi].t - s[lo].t);
    Pose out;
    out.t = t;
    out.p = s[lo].p + (s[hi].p - s[lo].p) * u;
    out.q = slerp(s[lo].q, s[hi].q, u);
    return out;
}

// Rotation speed resampled on a uniform grid:
//   w(t) = 2 * acos(min(1, |<q(t), q(t+dt)>|)) / dt,  dt = 1/sample_rate.
// |dot| folds the quaternion double cover.
inline Signal angular_speed_signal(const PoseTrack& track, double sample_rate) {
    if (sample_rate <= 0) raise(ErrorKind::InvalidInput, "sample rate must be positive");
    double t0 = track.samples.front().t;
    double span = track.samples.back().t - t0;
    if (span < 2.0 / sample_rate) {
        raise(ErrorKind::InsufficientData, "track spans fewer than two sample periods");
    }
    double dt = 1.0 / sample_rate;
    int len = static_cast<int>(std::floor(span * sample_rate + 1e-9));
    Signal sig;
    sig.rate = sample_rate;
    sig.values.resize(len);
    for (int k = 0; k < len; ++k) {
        double t = t0 + k * dt;
        double t2 = std::min(t + dt, track.samples.back().t);
        Quat a = interpolate_pose(track, std::min(t, track.samples.back().t)).q;
        Quat b = interpolate_pose(track, t2).q;
        double d = std::min(1.0, std::abs(a.dot(b)));
        sig.values[k] = 2.0 * std::acos(d) / dt;
    }
    return sig;
}

// Video-side motion proxy: mean absolute difference of consecutive grayscale
// frames, grayscale = (r+g+b)/3.
inline std::vector<double> frame_motion_signal(const std::vector<ImageF>& frames) {
    if (frames.size() < 2) {
        raise(ErrorKind::InsufficientData, "need at least 2 frames for a motion signal");
    }
    std::vector<double> out;
    out.reserve(frames.size() - 1);
    for (std::size_t k = 0; k + 1 < frames.size(); ++k) {
        const ImageF& a = frames[k];
        const ImageF& b = frames[k + 1];
        if (a.width() != b.width() || a.height() != b.height()) {
            raise(ErrorKind::InvalidInput, "frame dimensions differ");
        }
        double acc = 0;
        for (int y = 0; y < a.height(); ++y) {
            for (int x = 0; x < a.width(); ++x) {
                double ga = 0, gb = 0;
                for (int c = 0; c < std::min(3, a.channels()); ++c) ga += a(x, y, c);
                for (int c = 0; c < std::min(3, b.channels()); ++c) gb += b(x, y, c);
                ga /= std::min(3, a.channels());
                gb /= std::min(3, b.channels());
                acc += std::abs(gb - ga);
            }
        }
        out.push_back(acc / (static_cast<double>(a.width()) * a.height()));
    }
    return out;
}

inline std::vector<double> frame_motion_signal(const std::vector<std::string>& frame_paths) {
    std::vector<ImageF> frames;
    frames.reserve(frame_paths.size());
    for (const auto& p : frame_paths) frames.push_back(load_image(p, 1));
    return frame_motion_signal(frames);
}

namespace detail {

// Both motion proxies are interval measurements (sample k covers
// [k/rate, (k+1)/rate)), so resampling aligns interval midpoints; aligning
// left edges instead would bias the recovered offset by half the rate
// difference.
inline std::vector<double> resample_linear(const std::vector<double>& v, double src_rate,
                                           double dst_rate) {
    if (v.size() < 2 || src_rate == dst_rate) return v;
    std::size_t n_out = static_cast<std::size_t>(
                            std::floor((v.size() - 1) * dst_rate / src_rate + 1e-9)) + 1;
    std::vector<double> out(n_out);
    for (std::size_t j = 0; j < n_out; ++j) {
        double pos = (j + 0.5) * src_rate / dst_rate - 0.5;
        if (pos <= 0.0) {
            out[j] = v.front();
            continue;
        }
        std::size_t i = static_cast<std::size_t>(pos);
        if (i >= v.size() - 1) {
            out[j] = v.back();
        } else {
            double f = pos - i;
            out[j] = v[i] * (1.0 - f) + v[i + 1] * f;
        }
    }
    return out;
}

inline bool is_constant(const std::vector<double>& v) {
    auto [lo, hi] = std::minmax_element(v.begin(), v.end());
    return (*hi - *lo) < 1e-12 * std::max(1.0, std::abs(*hi));
}

}  // namespace detail

// Exhaustive normalized cross-correlation over integer lags at the common
// (higher) rate. Positive offset means the feature occurs later on the mocap
// clock than on the video clock.
inline SyncResult sync_offset(const Signal& mocap_signal, const Signal& video_signal,
                              double search_window_s) {
    if (mocap_signal.values.empty() || detail::is_constant(mocap_signal.values)) {
        raise(ErrorKind::DegenerateSignal, "mocap signal is constant");
    }
    if (video_signal.values.empty() || detail::is_constant(video_signal.values)) {
        raise(ErrorKind::DegenerateSignal, "video signal is constant");
    }
    double common = std::max(mocap_signal.rate, video_signal.rate);
    std::vector<double> m = detail::resample_linear(mocap_signal.values, mocap_signal.rate, common);
    std::vector<double> v = detail::resample_linear(video_signal.values, video_signal.rate, common);

    auto mean_remove = [](std::vector<double>& s) {
        double mean = 0;
        for (double x : s) mean += x;
        mean /= s.size();
        for (double& x : s) x -= mean;
    };
    mean_remove(m);
    mean_remove(v);

    const long lag_max = std::lround(search_window_s * common);
    long best_lag = 0;
    double best_corr = -2.0;
    const long nm = static_cast<long>(m.size());
    const long nv = static_cast<long>(v.size());
    for (long lag = -lag_max; lag <= lag_max; ++lag) {
        long k0 = std::max(0L, lag);
        long k1 = std::min(nm, nv + lag);
        if (k1 - k0 < 8) continue;
        double num = 0, mm = 0, vv = 0;
        for (long k = k0; k < k1; ++k) {
            double a = m[static_cast<std::size_t>(k)];
            double b = v[static_cast<std::size_t>(k - lag)];
            num += a * b;
            mm += a * a;
            vv += b * b;
        }
        if (mm <= 0 || vv <= 0) continue;
        double corr = num / std::sqrt(mm * vv);
        if (corr > best_corr ||
            (corr == best_corr && std::abs(lag) < std::abs(best_lag))) {
            best_corr = corr;
            best_lag = lag;
        }
    }
    if (best_corr < -1.5) {
        raise(ErrorKind::DegenerateSignal, "no valid correlation overlap within window");
    }

    SyncResult result;
    result.offset_s = static_cast<double>(best_lag) / common;
    result.peak_correlation = best_corr;
    result.common_rate_hz = common;
    result.low_confidence = best_corr < 0.2;
    if (result.low_confidence) {
        log_warn("sync peak correlation " + std::to_string(best_corr) + " is low");
    }
    return result;
}

// T_co = inverse(T_world_camera) o T_world_object: maps object-frame
// coordinates into the camera frame.
inline Pose relative_pose(const Pose& camera, const Pose& object) {
    if (std::abs(camera.q.norm() - 1.0) > 1e-6 || std::abs(object.q.norm() - 1.0) > 1e-6) {
        raise(ErrorKind::InvalidInput, "poses require unit quaternions");
    }
    Quat qc_inv = camera.q.conjugate();
    Pose rel;
    rel.t = camera.t;
    rel.q = (qc_inv * object.q).normalized();
    rel.p = qc_inv.rotate(object.p - camera.p);
    return rel;
}

// Camera origin in the object frame is c = -R^T p for rel = (R, p); the
// viewing direction is c normalized and the depth is |p|.
inline ViewSample viewing_sample(const Pose& rel, std::int64_t frame_index) {
    double d = rel.p.norm();
    if (d < 1e-12) {
        raise(ErrorKind::DegenerateGeometry, "camera and object coincide");
    }
    Vec3 c = rel.q.conjugate().rotate(rel.p * -1.0);
    ViewSample vs;
    vs.frame_index = frame_index;
    vs.v = c.normalized();
    vs.depth = d;
    vs.rel = rel;
    return vs;
}

}  // namespace synthforge::mocap
