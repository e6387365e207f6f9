# Saddle keypoint detector source package.
