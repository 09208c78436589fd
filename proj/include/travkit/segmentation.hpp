#pragma once

#include <cstdio>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include <json.hpp>

#include "travkit/prompt.hpp"

// Pluggable promptable-segmentation interface: a deterministic in-process
// oracle for tests plus a newline-delimited JSON wire protocol for a real
// model server. Masks cross the wire as COCO-style uncompressed RLE.

namespace travkit {

struct SegPoint {
    int u = 0, v = 0;
    bool positive = true;
};

struct SegmentationRequest {
    std::string image_ref;
    std::vector<SegPoint> points;
    std::string request_id;

    void validate(int height, int width) const {
        bool has_pos = false;
        for (const auto& p : points) {
            if (p.u < 0 || p.u >= width || p.v < 0 || p.v >= height)
                throw ProtocolError("segmentation point out of bounds in request " + request_id);
            has_pos = has_pos || p.positive;
        }
        if (!has_pos) throw ProtocolError("segmentation request without a positive point: " + request_id);
    }
};

struct SegmentationResult {
    std::vector<MaskImage> masks;
    std::vector<double> scores;
};

// Masks and scores are validated on receipt from any backend; violations
// raise ProtocolError rather than propagating silently.
inline void validate_result(const SegmentationResult& res, int height, int width) {
    if (res.masks.size() != res.scores.size())
        throw ProtocolError("mask/score count mismatch");
    for (const auto& m : res.masks) {
        if (m.height() != height || m.width() != width) throw ProtocolError("mask size mismatch");
        for (uint8_t v : m.raw())
            if (v > 1) throw ProtocolError("mask is not binary-valued");
    }
    for (double s : res.scores)
        if (!(s >= 0.0 && s <= 1.0)) throw ProtocolError("score outside [0,1]");
}

class SegmentationBackend {
  public:
    virtual ~SegmentationBackend() = default;
    virtual SegmentationResult segment(const SegmentationRequest& req) = 0;
};

// One request per POSITIVE prompt, each carrying every NEGATIVE prompt, so
// mask-to-prompt attribution stays unambiguous downstream.
inline std::vector<SegmentationRequest> one_query_per_positive(const PromptSet& prompts) {
    auto pos = prompts.positives();
    auto neg = prompts.negatives();
    if (pos.empty()) throw EmptyPromptsError("one_query_per_positive: no positive prompts");

    std::vector<SegmentationRequest> out;
    for (size_t i = 0; i < pos.size(); ++i) {
        SegmentationRequest req;
        req.image_ref = prompts.image_id;
        req.request_id = prompts.image_id + "#" + std::to_string(i);
        req.points.push_back({pos[i].u, pos[i].v, true});
        for (const auto& n : neg) req.points.push_back({n.u, n.v, false});
        out.push_back(std::move(req));
    }
    return out;
}

// Deterministic oracle: for each positive point, the connected component of
// the registered ground-truth region map containing it (score 1.0), unless
// that component also contains a negative point.
class OracleBackend : public SegmentationBackend {
  public:
    void register_regions(const std::string& image_ref, Image<int32_t> regions) {
        regions_[image_ref] = std::move(regions);
    }

    SegmentationResult segment(const SegmentationRequest& req) override {
        auto it = regions_.find(req.image_ref);
        if (it == regions_.end())
            throw BackendUnavailableError("oracle has no regions for image " + req.image_ref);
        const Image<int32_t>& regions = it->second;
        req.validate(regions.height(), regions.width());

        std::vector<int32_t> excluded;
        for (const auto& p : req.points)
            if (!p.positive) excluded.push_back(regions.at(p.v, p.u));

        SegmentationResult res;
        for (const auto& p : req.points) {
            if (!p.positive) continue;
            int32_t cid = regions.at(p.v, p.u);
            if (std::find(excluded.begin(), excluded.end(), cid) != excluded.end()) continue;
            MaskImage m(regions.height(), regions.width(), 0);
            for (size_t i = 0; i < regions.size(); ++i)
                if (regions.raw()[i] == cid) m.raw()[i] = 1;
            res.masks.push_back(std::move(m));
            res.scores.push_back(1.0);
        }
        validate_result(res, regions.height(), regions.width());
        return res;
    }

  private:
    std::map<std::string, Image<int32_t>> regions_;
};

// --- COCO-style uncompressed RLE: column-major runs, first count is zeros ---

inline nlohmann::json rle_encode(const MaskImage& mask) {
    std::vector<int64_t> counts;
    uint8_t cur = 0;
    int64_t run = 0;
    for (int u = 0; u < mask.width(); ++u)
        for (int v = 0; v < mask.height(); ++v) {
            uint8_t val = mask.at(v, u) ? 1 : 0;
            if (val == cur) {
                ++run;
            } else {
                counts.push_back(run);
                cur = val;
                run = 1;
            }
        }
    counts.push_back(run);
    return nlohmann::json{{"size", {mask.height(), mask.width()}}, {"counts", counts}};
}

inline MaskImage rle_decode(const nlohmann::json& rle) {
    if (!rle.is_object() || !rle.contains("size") || !rle.contains("counts"))
        throw ProtocolError("RLE missing size/counts");
    const auto& size = rle["size"];
    if (!size.is_array() || size.size() != 2) throw ProtocolError("RLE size must be [H,W]");
    int h = size[0].get<int>();
    int w = size[1].get<int>();
    if (h <= 0 || w <= 0) throw ProtocolError("RLE size must be positive");

    MaskImage mask(h, w, 0);
    int64_t total = static_cast<int64_t>(h) * w;
    int64_t pos = 0;
    uint8_t val = 0;
    for (const auto& c : rle["counts"]) {
        if (!c.is_number_integer() || c.get<int64_t>() < 0)
            throw ProtocolError("RLE counts must be nonnegative integers");
        int64_t n = c.get<int64_t>();
        if (pos + n > total) throw ProtocolError("RLE counts exceed mask size");
        for (int64_t i = 0; i < n; ++i, ++pos)
            mask.at(static_cast<int>(pos % h), static_cast<int>(pos / h)) = val;
        val = 1 - val;
    }
    if (pos != total) throw ProtocolError("RLE counts do not cover the mask");
    return mask;
}

// --- newline-delimited JSON wire protocol ---

inline std::string encode_wire_request(const SegmentationRequest& req) {
    nlohmann::json points = nlohmann::json::array();
    for (const auto& p : req.points) points.push_back({p.u, p.v, p.positive ? 1 : 0});
    nlohmann::json j{{"id", req.request_id}, {"image", req.image_ref}, {"points", points}};
    return j.dump() + "\n";
}

inline SegmentationRequest decode_wire_request(const std::string& line) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed wire request: ") + e.what());
    }
    if (!j.contains("id") || !j.contains("image") || !j.contains("points"))
        throw ProtocolError("wire request missing id/image/points");
    SegmentationRequest req;
    req.request_id = j["id"].get<std::string>();
    req.image_ref = j["image"].get<std::string>();
    for (const auto& p : j["points"]) {
        if (!p.is_array() || p.size() != 3) throw ProtocolError("wire point must be [u,v,polarity]");
        req.points.push_back({p[0].get<int>(), p[1].get<int>(), p[2].get<int>() != 0});
    }
    return req;
}

inline std::string encode_wire_response(const std::string& request_id, const SegmentationResult& res) {
    nlohmann::json masks = nlohmann::json::array();
    for (const auto& m : res.masks) masks.push_back(rle_encode(m));
    nlohmann::json j{{"id", request_id}, {"masks", masks}, {"scores", res.scores}};
    return j.dump() + "\n";
}

// Parses and validates one response line. The caller supplies the expected
// mask size; any deviation raises ProtocolError.
inline std::pair<std::string, SegmentationResult> decode_wire_response(const std::string& line,
                                                                       int height, int width) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed wire response: ") + e.what());
    }
    if (!j.contains("id") || !j.contains("masks") || !j.contains("scores"))
        throw ProtocolError("wire response missing id/masks/scores");

    SegmentationResult res;
    try {
        for (const auto& m : j["masks"]) res.masks.push_back(rle_decode(m));
        res.scores = j["scores"].get<std::vector<double>>();
    } catch (const nlohmann::json::exception& e) {
        throw ProtocolError(std::string("malformed wire response: ") + e.what());
    }
    validate_result(res, height, width);
    return {j["id"].get<std::string>(), res};
}

// Wire backend over a pair of file descriptors (socket or pipes). Requests
// may come from several threads; the adapter serializes internally and
// matches responses by request id, never by arrival order.
class WireBackend : public SegmentationBackend {
  public:
    WireBackend(FILE* in, FILE* out, int height, int width)
        : in_(in), out_(out), height_(height), width_(width) {}

    SegmentationResult segment(const SegmentationRequest& req) override {
        req.validate(height_, width_);
        std::lock_guard<std::mutex> lock(mu_);

        auto pending = pending_.find(req.request_id);
        if (pending != pending_.end()) {
            SegmentationResult res = std::move(pending->second);
            pending_.erase(pending);
            return res;
        }

        std::string line = encode_wire_request(req);
        if (std::fwrite(line.data(), 1, line.size(), out_) != line.size() || std::fflush(out_) != 0)
            throw BackendUnavailableError("wire backend write failed");

        for (;;) {
            std::string reply = read_line();
            auto [id, res] = decode_wire_response(reply, height_, width_);
            if (id == req.request_id) return res;
            pending_[id] = std::move(res);  // out-of-order reply for another caller
        }
    }

  private:
    std::string read_line() {
        std::string line;
        int c;
        while ((c = std::fgetc(in_)) != EOF) {
            if (c == '\n') return line;
            line.push_back(static_cast<char>(c));
        }
        throw BackendUnavailableError("wire backend closed the connection");
    }

    FILE* in_;
    FILE* out_;
    int height_, width_;
    std::mutex mu_;
    std::map<std::string, SegmentationResult> pending_;
};

}  // namespace travkit
