#include "dda/image.hpp"

#include <sstream>

#include "dda/errors.hpp"

namespace dda {

ImageTensor::ImageTensor(std::size_t height, std::size_t width, std::size_t channels)
    : height_(height), width_(width) {
    if (channels == 0) throw DataError("image must have at least one channel");
    planes_.reserve(channels);
    for (std::size_t c = 0; c < channels; ++c) planes_.emplace_back(height, width);
}

ImageTensor::ImageTensor(std::vector<Plane> planes) : planes_(std::move(planes)) {
    if (planes_.empty()) throw DataError("image must have at least one channel");
    height_ = planes_.front().height();
    width_ = planes_.front().width();
    for (std::size_t c = 1; c < planes_.size(); ++c) {
        if (!planes_[c].same_shape(planes_.front())) {
            std::ostringstream msg;
            msg << "channel " << c << " is " << planes_[c].height() << "x" << planes_[c].width()
                << ", channel 0 is " << height_ << "x" << width_;
            throw DataError(msg.str());
        }
    }
}

std::vector<double> ImageTensor::flatten() const {
    std::vector<double> out;
    out.reserve(size());
    for (const auto& p : planes_) out.insert(out.end(), p.values().begin(), p.values().end());
    return out;
}

std::string ImageTensor::shape_string() const {
    std::ostringstream s;
    s << height_ << "x" << width_ << "x" << channels();
    return s.str();
}

std::string_view to_string(DomainTag tag) {
    return tag == DomainTag::source ? "source" : "target";
}

DomainTag parse_domain(std::string_view text) {
    if (text == "source") return DomainTag::source;
    if (text == "target") return DomainTag::target;
    throw ConfigError("unknown domain '" + std::string(text) + "' (expected source or target)");
}

void Dataset::validate() const {
    if (images.size() != labels.size()) {
        std::ostringstream msg;
        msg << name << ": " << images.size() << " images but " << labels.size() << " labels";
        throw DataError(msg.str());
    }
    for (std::size_t i = 1; i < images.size(); ++i) {
        if (!images[i].same_geometry(images.front())) {
            std::ostringstream msg;
            msg << name << ": image " << i << " is " << images[i].shape_string() << ", image 0 is "
                << images.front().shape_string();
            throw DataError(msg.str());
        }
    }
}

}  // namespace dda
