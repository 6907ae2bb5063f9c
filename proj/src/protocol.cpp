#include "fedkbp/protocol.hpp"

#include <cmath>
#include <cstring>
#include <sstream>

#include "fedkbp/detail/little_endian.hpp"

namespace fedkbp {

namespace {

constexpr std::uint8_t kMagic[4] = {'F', 'K', 'B', 'P'};

void encode_params_block(std::vector<std::uint8_t>& out, const ParamVector& params) {
    std::string manifest_text;
    for (const auto& layer : params.manifest) {
        manifest_text += layer.name;
        for (auto d : layer.shape) {
            manifest_text += ' ';
            manifest_text += std::to_string(d);
        }
        manifest_text += '\n';
    }
    detail::put_u32(out, static_cast<std::uint32_t>(manifest_text.size()));
    out.insert(out.end(), manifest_text.begin(), manifest_text.end());
    detail::put_u64(out, static_cast<std::uint64_t>(params.data.size()));
    for (float v : params.data) detail::put_f32(out, v);
}

ParamVector decode_params_block(detail::ByteReader& reader) {
    const std::uint32_t text_len = reader.get_u32("manifest length");
    reader.require(text_len, "manifest text");
    std::string manifest_text(reinterpret_cast<const char*>(reader.data + reader.pos), text_len);
    reader.pos += text_len;

    std::vector<LayerSpec> manifest;
    std::istringstream lines(manifest_text);
    std::string line;
    while (std::getline(lines, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        LayerSpec layer;
        row >> layer.name;
        std::int64_t d = 0;
        while (row >> d) layer.shape.push_back(d);
        if (layer.name.empty() || layer.shape.empty() || !row.eof())
            throw ProtocolError("malformed manifest line in params block: '" + line + "'");
        manifest.push_back(std::move(layer));
    }

    std::int64_t expected = 0;
    for (const auto& layer : manifest) {
        for (auto d : layer.shape)
            if (d <= 0) throw ProtocolError("non-positive dim in params manifest");
        expected += layer.count();
    }
    const std::uint64_t count = reader.get_u64("value count");
    if (count != static_cast<std::uint64_t>(expected))
        throw ProtocolError("params value count " + std::to_string(count) +
                            " does not match manifest total " + std::to_string(expected));

    std::vector<float> values(count);
    for (auto& v : values) {
        v = reader.get_f32("param value");
        if (!std::isfinite(v)) throw ProtocolError("non-finite value in params block");
    }
    try {
        return ParamVector(std::move(manifest), std::move(values));
    } catch (const StructuralError& e) {
        throw ProtocolError(std::string("invalid params block: ") + e.what());
    }
}

}  // namespace

Message Message::join(std::uint16_t site_id) {
    Message m;
    m.type = MessageType::JOIN;
    m.site_id = site_id;
    return m;
}

Message Message::round_begin(std::uint32_t round, std::uint16_t site_id, ParamVector params) {
    Message m;
    m.type = MessageType::ROUND_BEGIN;
    m.round = round;
    m.site_id = site_id;
    m.params = std::move(params);
    return m;
}

Message Message::round_update(std::uint32_t round, std::uint16_t site_id, ParamVector params,
                              std::uint64_t n, double train_loss) {
    Message m;
    m.type = MessageType::ROUND_UPDATE;
    m.round = round;
    m.site_id = site_id;
    m.params = std::move(params);
    m.n = n;
    m.train_loss = train_loss;
    return m;
}

Message Message::round_commit(std::uint32_t round, std::uint16_t site_id, ParamVector params) {
    Message m;
    m.type = MessageType::ROUND_COMMIT;
    m.round = round;
    m.site_id = site_id;
    m.params = std::move(params);
    return m;
}

bool messages_identical(const Message& a, const Message& b) {
    if (a.type != b.type || a.round != b.round || a.site_id != b.site_id || a.n != b.n)
        return false;
    if (std::memcmp(&a.train_loss, &b.train_loss, sizeof(double)) != 0) return false;
    if (a.params.manifest != b.params.manifest) return false;
    if (a.params.data.size() != b.params.data.size()) return false;
    return a.params.data.empty() ||
           std::memcmp(a.params.data.data(), b.params.data.data(),
                       a.params.data.size() * sizeof(float)) == 0;
}

std::vector<std::uint8_t> encode_message(const Message& msg) {
    std::vector<std::uint8_t> payload;
    switch (msg.type) {
        case MessageType::JOIN:
            break;
        case MessageType::ROUND_BEGIN:
        case MessageType::ROUND_COMMIT:
            encode_params_block(payload, msg.params);
            break;
        case MessageType::ROUND_UPDATE:
            detail::put_u64(payload, msg.n);
            detail::put_f64(payload, msg.train_loss);
            encode_params_block(payload, msg.params);
            break;
    }

    std::vector<std::uint8_t> frame;
    frame.reserve(kFrameHeaderSize + payload.size());
    frame.insert(frame.end(), std::begin(kMagic), std::end(kMagic));
    detail::put_u8(frame, kProtocolVersion);
    detail::put_u8(frame, static_cast<std::uint8_t>(msg.type));
    detail::put_u32(frame, msg.round);
    detail::put_u16(frame, msg.site_id);
    detail::put_u64(frame, static_cast<std::uint64_t>(payload.size()));
    frame.insert(frame.end(), payload.begin(), payload.end());
    return frame;
}

Message decode_message(const std::vector<std::uint8_t>& frame) {
    detail::ByteReader reader{frame.data(), frame.size(), 0};
    reader.require(kFrameHeaderSize, "frame header");
    if (std::memcmp(frame.data(), kMagic, 4) != 0)
        throw ProtocolError("bad frame magic");
    reader.pos = 4;
    const std::uint8_t version = reader.get_u8("version");
    if (version != kProtocolVersion)
        throw ProtocolError("unsupported protocol version " + std::to_string(version));
    const std::uint8_t type_raw = reader.get_u8("message type");
    if (type_raw < 1 || type_raw > 4)
        throw ProtocolError("unknown message type " + std::to_string(type_raw));

    Message msg;
    msg.type = static_cast<MessageType>(type_raw);
    msg.round = reader.get_u32("round");
    msg.site_id = reader.get_u16("site id");
    const std::uint64_t payload_len = reader.get_u64("payload length");
    if (payload_len != frame.size() - kFrameHeaderSize)
        throw ProtocolError("payload length " + std::to_string(payload_len) +
                            " does not match frame size");

    switch (msg.type) {
        case MessageType::JOIN:
            break;
        case MessageType::ROUND_BEGIN:
        case MessageType::ROUND_COMMIT:
            msg.params = decode_params_block(reader);
            break;
        case MessageType::ROUND_UPDATE:
            msg.n = reader.get_u64("update sample count");
            msg.train_loss = reader.get_f64("update train loss");
            msg.params = decode_params_block(reader);
            break;
    }
    if (reader.remaining() != 0)
        throw ProtocolError("trailing bytes after payload");
    return msg;
}

void FrameReader::feed(const std::uint8_t* data, std::size_t size) {
    buffer_.insert(buffer_.end(), data, data + size);
}

std::optional<std::vector<std::uint8_t>> FrameReader::next_frame() {
    if (buffer_.size() < kFrameHeaderSize) return std::nullopt;
    detail::ByteReader reader{buffer_.data(), buffer_.size(), 12};
    const std::uint64_t payload_len = reader.get_u64("payload length");
    const std::uint64_t frame_len = kFrameHeaderSize + payload_len;
    if (buffer_.size() < frame_len) return std::nullopt;
    std::vector<std::uint8_t> frame(buffer_.begin(),
                                    buffer_.begin() + static_cast<std::ptrdiff_t>(frame_len));
    buffer_.erase(buffer_.begin(), buffer_.begin() + static_cast<std::ptrdiff_t>(frame_len));
    return frame;
}

}  // namespace fedkbp
