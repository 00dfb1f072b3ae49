import logging
import pathlib
import tempfile


def get_output_dir(folder):
    """Local directory the recipe writes its result files to

    If the managed folder isn't on the local filesystem, a temporary dir
    is returned instead and its contents must be uploaded with
    :func:`upload_folder` once the files are written

    :param folder: Output folder
    :type folder: dataiku.Folder

    :return: Local path, and the temporary dir object if one was created
    :rtype: tuple[pathlib.Path, tempfile.TemporaryDirectory | None]
    """
    try:
        path = folder.get_path()
    except Exception:
        logging.warning(
            "Unable to access the folder %r directly because it's not on the "
            "local filesystem. Results will be written to a temporary local "
            "directory and uploaded",
            folder.name,
        )
        temp_dir = tempfile.TemporaryDirectory(prefix="dss-plugin-cmab-")
        path = temp_dir.name
    else:
        temp_dir = None

    return pathlib.Path(path), temp_dir


def upload_folder(local_path, remote_folder):
    """Upload the files under a local directory to a managed folder

    :param local_path: Local directory
    :type local_path: pathlib.Path
    :param remote_folder: Managed folder the files are uploaded to
    :type remote_folder: dataiku.Folder

    :return: Number of uploaded files
    :rtype: int
    """
    uploaded = 0
    for file in sorted(local_path.rglob("*")):
        if not file.is_file():
            continue
        remote_path = file.relative_to(local_path).as_posix()
        logging.info("Uploading: %s", remote_path)
        remote_folder.upload_file(remote_path, str(file))
        uploaded += 1
    return uploaded
